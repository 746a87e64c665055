mod common;

use flexmm::explore::build_table;
use flexmm::isa::{
    decode_stream, disassemble, encode_stream, generate_program, parse_disassembly, plan_layout,
    Instruction, Op, Program, Range2, UnitKind,
};
use flexmm::perfmodel::plan::num_blocks;
use flexmm::scheduler::{solve_ga, GaParams};
use flexmm::workload::{gen_mlp, gen_transformer, LayerNode, WorkloadDag};
use flexmm::{decode, encode, Error, HardwareConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn planned(dag: &WorkloadDag, hw: &HardwareConfig, seed: u64) -> Program {
    let table = build_table(dag, hw).unwrap();
    let params = GaParams {
        seed,
        ..GaParams::default()
    };
    let s = solve_ga(dag, &table, hw, &params).unwrap();
    generate_program(&s, dag, &table, hw).unwrap()
}

fn corpus() -> Vec<WorkloadDag> {
    vec![
        gen_mlp(&[(64, 96, 40), (64, 40, 130), (64, 130, 8)]).unwrap(),
        gen_transformer(16, 2, 16, 2.0, 1).unwrap(),
        WorkloadDag::new(
            vec![
                LayerNode::new(0, 300, 70, 45),
                LayerNode::new(1, 9, 17, 500),
            ],
            vec![],
        )
        .unwrap(),
    ]
}

proptest! {
    #[test]
    fn random_instruction_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = common::random_instruction(&mut rng);
        prop_assert_eq!(decode(&encode(&x).unwrap()).unwrap(), x);
    }
}

#[test]
fn hundred_thousand_instructions_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let xs: Vec<Instruction> = (0..100_000)
        .map(|_| common::random_instruction(&mut rng))
        .collect();
    let words = encode_stream(&xs).unwrap();
    assert_eq!(words.len(), xs.iter().map(|x| x.word_len()).sum::<usize>());
    assert_eq!(decode_stream(&words).unwrap(), xs);
}

#[test]
fn overflow_names_field_and_width() {
    let x = Instruction::Cu {
        is_last: false,
        ping_op: Op::Compute,
        pong_op: Op::Idle,
        src_fmu: 3,
        des_fmu: 16,
        count: 1,
    };
    match encode(&x) {
        Err(Error::Encode { field, width, .. }) => assert_eq!((field, width), ("des_fmu", 4)),
        other => panic!("{other:?}"),
    }
    let x = Instruction::IomLoad {
        is_last: true,
        ddr_addr: 0,
        des_fmu: 0,
        m: 70000,
        n: 1,
        range: Range2::default(),
    };
    assert!(matches!(encode(&x), Err(Error::Encode { width: 16, .. })));
}

#[test]
fn malformed_words_are_rejected() {
    assert!(decode(&[]).is_err());
    // Tag 7 is unassigned.
    assert!(decode(&[7 << 28, 0]).is_err());
    // An FMU instruction needs four words.
    assert!(decode(&[1, 5]).is_err());
    // Op code 9 is unassigned.
    assert!(decode(&[9 << 8, 1, 0, 0]).is_err());
}

#[test]
fn generated_programs_reencode_identically() {
    let hw = HardwareConfig::default();
    for (i, dag) in corpus().iter().enumerate() {
        let p = planned(dag, &hw, i as u64);
        p.check().unwrap();
        let bytes = p.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"FILC");
        let back = Program::from_bytes(&bytes).unwrap();
        assert_eq!(back, p);
        let text = disassemble(&p);
        let parsed = parse_disassembly(&text).unwrap();
        assert_eq!(parsed.to_bytes().unwrap(), bytes);
        assert_eq!(disassemble(&parsed), text);
    }
}

#[test]
fn generation_is_deterministic() {
    let hw = HardwareConfig::default();
    let dag = &corpus()[1];
    assert_eq!(
        planned(dag, &hw, 4).to_bytes().unwrap(),
        planned(dag, &hw, 4).to_bytes().unwrap()
    );
}

#[test]
fn unit_outside_platform_is_rejected() {
    let hw = HardwareConfig::default();
    let dag = WorkloadDag::new(vec![LayerNode::new(0, 16, 16, 16)], vec![]).unwrap();
    let table = build_table(&dag, &hw).unwrap();
    let mut s = solve_ga(&dag, &table, &hw, &GaParams::default()).unwrap();
    s.layers[0].cus[0] = hw.n_cu;
    assert!(matches!(
        generate_program(&s, &dag, &table, &hw),
        Err(Error::Generation(_))
    ));
    let mut s = solve_ga(&dag, &table, &hw, &GaParams::default()).unwrap();
    s.layers[0].fmus[0] = 40;
    assert!(matches!(
        generate_program(&s, &dag, &table, &hw),
        Err(Error::Generation(_))
    ));
}

#[test]
fn streams_end_with_last_and_headers_cover_words() {
    let hw = HardwareConfig::default();
    for (i, dag) in corpus().iter().enumerate() {
        let p = planned(dag, &hw, 10 + i as u64);
        for s in p.streams.values() {
            assert!(s.last().unwrap().is_last());
            assert_eq!(s.iter().filter(|x| x.is_last()).count(), 1);
        }
        let words: usize = p
            .streams
            .values()
            .map(|s| encode_stream(s).unwrap().len())
            .sum();
        assert_eq!(p.header_words(), words);
    }
}

#[test]
fn fmu_roles_do_not_mix_within_a_layer() {
    let hw = HardwareConfig::default();
    let dag = WorkloadDag::new(vec![LayerNode::new(0, 200, 150, 90)], vec![]).unwrap();
    let p = planned(&dag, &hw, 3);
    for (u, s) in p.streams.iter().filter(|(u, _)| u.kind == UnitKind::Fmu) {
        let ops: Vec<Op> = s
            .iter()
            .filter_map(|x| x.active_op().map(|o| o.0))
            .collect();
        let lhs = ops.contains(&Op::LoadLhs);
        let rhs = ops.contains(&Op::LoadRhs);
        let out = ops.contains(&Op::StoreOut);
        assert_eq!(lhs as u8 + rhs as u8 + out as u8, 1, "{u} mixes roles");
    }
}

/// Every operand element is loaded once per block that uses it: LHS once per column
/// block, RHS once per row block.
#[test]
fn loads_cover_operands_once_per_round() {
    let hw = HardwareConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let layer = LayerNode::new(
            0,
            rng.gen_range(1..300),
            rng.gen_range(1..300),
            rng.gen_range(1..300),
        );
        let dag = WorkloadDag::new(vec![layer.clone()], vec![]).unwrap();
        let table = build_table(&dag, &hw).unwrap();
        let s = solve_ga(&dag, &table, &hw, &GaParams::default()).unwrap();
        let p = generate_program(&s, &dag, &table, &hw).unwrap();
        let spec = table.layers[0][s.layers[0].mode].spec;
        let lay = plan_layout(&dag).unwrap();
        let lhs = &lay.regions[lay.layers[0].lhs];
        let rhs = &lay.regions[lay.layers[0].rhs];
        let mut hits_l = vec![0usize; layer.m * layer.k];
        let mut hits_r = vec![0usize; layer.k * layer.n];
        for x in p.streams.values().flatten() {
            if let Instruction::IomLoad {
                ddr_addr, range, ..
            } = *x
            {
                let (hits, cols) = if ddr_addr == lhs.addr {
                    (&mut hits_l, layer.k)
                } else {
                    assert_eq!(ddr_addr, rhs.addr);
                    (&mut hits_r, layer.n)
                };
                for r in range.start_row..=range.end_row {
                    for c in range.start_col..=range.end_col {
                        hits[r as usize * cols + c as usize] += 1;
                    }
                }
            }
        }
        let nn = num_blocks(layer.n, spec.block.n);
        let nm = num_blocks(layer.m, spec.block.m);
        assert!(
            hits_l.iter().all(|&h| h == nn),
            "{:?} {spec:?}",
            layer.dims()
        );
        assert!(
            hits_r.iter().all(|&h| h == nm),
            "{:?} {spec:?}",
            layer.dims()
        );
    }
}
