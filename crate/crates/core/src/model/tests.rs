use rand::Rng;

use super::*;
use crate::synthgen::rng_from_seed;

fn arch() -> ArchitectureSpec {
    ArchitectureSpec::kunet(60, 30)
}

fn small_arch() -> ArchitectureSpec {
    ArchitectureSpec {
        latent_dim: 8,
        ..ArchitectureSpec::kunet(60, 30)
    }
}

fn random_inputs(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| (0..len).map(|_| rng.gen_range(-1.5..1.5)).collect())
        .collect()
}

#[test]
fn layer_shapes_for_default_arch() {
    let a = arch();
    a.validate().unwrap();
    assert_eq!(
        a.layer_shapes(),
        vec![(10, 128), (768, 128), (128, 768), (256, 5)]
    );
    assert_eq!(a.dims(), vec![60, 768, 128, 768, 30]);
    assert_eq!(a.dims().len(), a.depth() + 1);
}

#[test]
fn indivisible_input_is_rejected() {
    let a = ArchitectureSpec {
        patch_len: 7,
        ..arch()
    };
    assert!(matches!(a.validate(), Err(Error::Config { .. })));
}

#[test]
fn effective_weight_examples() {
    let phi = Block::from_parts(1, 1, &[1.0], &[0.0]).unwrap();
    let mut layer = TrunkLayerParams::new(phi.clone(), 0.0);
    assert_eq!(effective_weight(&layer), phi);

    layer.phi = Block::zeros(1, 1);
    layer.theta = Block::from_parts(1, 1, &[2.5], &[-1.0]).unwrap();
    assert_eq!(effective_weight(&layer), layer.theta);

    layer.phi = Block::from_parts(1, 1, &[1.0], &[0.0]).unwrap();
    layer.theta = Block::from_parts(1, 1, &[0.5], &[0.0]).unwrap();
    assert_eq!(effective_weight(&layer).weight(), &[1.5]);
}

fn adapter(down: Vec<f64>, up: Vec<f64>, d_in: usize, d_out: usize, rank: usize, scale: f64) -> LoraAdapter {
    LoraAdapter {
        d_in,
        d_out,
        rank,
        scale,
        down,
        up,
    }
}

#[test]
fn lora_effective_weight_examples() {
    let base = vec![1.0, 0.0, 0.0, 1.0, 2.0, 3.0];
    let zero_down = adapter(vec![0.0; 3], vec![4.0, 5.0], 3, 2, 1, 1.0);
    assert_eq!(lora_effective_weight(&base, &zero_down).unwrap(), base);

    let zero_scale = adapter(vec![1.0; 3], vec![4.0, 5.0], 3, 2, 1, 0.0);
    assert_eq!(lora_effective_weight(&base, &zero_scale).unwrap(), base);

    let base3 = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let a = adapter(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], 3, 3, 1, 1.0);
    assert_eq!(
        lora_effective_weight(&base3, &a).unwrap(),
        vec![1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
    );

    let full_rank = adapter(vec![0.0; 4], vec![0.0; 4], 2, 2, 2, 1.0);
    assert!(matches!(
        lora_effective_weight(&[0.0; 4], &full_rank),
        Err(Error::Config { .. })
    ));
}

#[test]
fn lora_hand_example_on_identity() {
    let base = [1.0, 0.0, 0.0, 1.0];
    let a = adapter(vec![1.0, 0.0], vec![0.0, 1.0], 2, 2, 1, 1.0);
    assert_eq!(
        lora_effective_weight(&base, &a).unwrap(),
        vec![1.0, 1.0, 0.0, 1.0]
    );
}

fn static_twin(dynamic: &Model) -> Model {
    let Params::Dynamic { trunk, branch } = &dynamic.params else {
        unreachable!()
    };
    let layers = trunk
        .iter()
        .map(|t| t.phi.clone())
        .chain(branch.iter().map(|b| b.psi.clone()))
        .collect();
    Model {
        arch: dynamic.arch.clone(),
        params: Params::Static { layers },
    }
}

#[test]
fn dynamic_with_zero_theta_matches_static() {
    let mut rng = rng_from_seed(3);
    let dynamic = Model::dynamic(arch(), &[1e-4, 1e-4], &mut rng).unwrap();
    let stat = static_twin(&dynamic);
    let xs = random_inputs(100, 60, 4);
    assert_eq!(dynamic.predict(&xs).unwrap(), stat.predict(&xs).unwrap());
}

#[test]
fn lora_with_zero_down_matches_base() {
    let mut rng = rng_from_seed(5);
    let base = Model::static_model(arch(), &mut rng).unwrap();
    let mut lora = Model::lora_from(&base, 4, 1.0, &mut rng).unwrap();
    if let Params::Lora { adapters, .. } = &mut lora.params {
        for a in adapters {
            a.down.iter_mut().for_each(|v| *v = 0.0);
            a.up.iter_mut().for_each(|v| *v = 0.7);
        }
    }
    let xs = random_inputs(10, 60, 6);
    assert_eq!(lora.predict(&xs).unwrap(), base.predict(&xs).unwrap());
}

#[test]
fn forward_is_finite_with_output_shape() {
    let mut rng = rng_from_seed(7);
    for model in [
        Model::dynamic(arch(), &[1e-4, 1e-4], &mut rng).unwrap(),
        Model::init_all(arch(), &mut rng).unwrap(),
        Model::static_model(ArchitectureSpec::linear(60, 30), &mut rng).unwrap(),
    ] {
        let x = Tensor::vector(random_inputs(1, 60, 8).remove(0));
        let y = model.forward(&x).unwrap();
        assert_eq!(y.shape(), &[30]);
        assert!(y.is_finite());
    }
}

#[test]
fn forward_rejects_wrong_length() {
    let mut rng = rng_from_seed(7);
    let model = Model::static_model(arch(), &mut rng).unwrap();
    let err = model.forward(&Tensor::vector(vec![0.0; 59])).unwrap_err();
    assert!(err.to_string().contains("layer 0"), "{err}");
}

#[test]
fn zero_input_zero_bias_gives_zero_output() {
    let mut rng = rng_from_seed(9);
    let mut model = Model::static_model(arch(), &mut rng).unwrap();
    if let Params::Static { layers } = &mut model.params {
        for b in layers {
            let w = b.d_in * b.d_out;
            b.values[w..].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let y = model.predict(&[vec![0.0; 60]]).unwrap();
    assert!(y[0].iter().all(|v| *v == 0.0));
}

#[test]
fn skip_connection_is_live() {
    let mut rng = rng_from_seed(10);
    let model = Model::static_model(arch(), &mut rng).unwrap();
    let xs = random_inputs(2, 60, 11);
    let run = |gain: f64| {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, ParamGroup::Nothing).unwrap();
        let x = tape.constant(batch_tensor(&xs, 60).unwrap());
        let levels = kunet_encode(&mut tape, &model.arch, &bound.layers[..2], x).unwrap();
        let y = kunet_decode(&mut tape, &model.arch, &bound.layers[2..], &levels, gain).unwrap();
        tape.value(y).data().to_vec()
    };
    let base = run(1.0);
    let doubled = run(2.0);
    let delta: f64 = base.iter().zip(&doubled).map(|(a, b)| (a - b).abs()).sum();
    assert!(delta > 0.0);
}

#[test]
fn reinit_branch_contracts() {
    let mut rng = rng_from_seed(12);
    let mut model = Model::dynamic(small_arch(), &[1e-4, 1e-4], &mut rng).unwrap();
    let trunk_before = match &model.params {
        Params::Dynamic { trunk, .. } => trunk.clone(),
        _ => unreachable!(),
    };
    let xs = random_inputs(3, 60, 1);
    let x = batch_tensor(&xs, 60).unwrap();
    let acts_before = model.encode_constants(&x).unwrap();

    let mut a = model.clone();
    let mut b = model.clone();
    a.reinit_branch(&mut rng_from_seed(99)).unwrap();
    b.reinit_branch(&mut rng_from_seed(99)).unwrap();
    assert_eq!(a, b);

    model.reinit_branch(&mut rng).unwrap();
    match &model.params {
        Params::Dynamic { trunk, .. } => assert_eq!(trunk, &trunk_before),
        _ => unreachable!(),
    }
    assert_eq!(model.encode_constants(&x).unwrap(), acts_before);

    let mut stat = Model::static_model(small_arch(), &mut rng).unwrap();
    assert!(matches!(stat.reinit_branch(&mut rng), Err(Error::Contract(_))));
}

#[test]
fn reinit_branch_matches_init_distribution() {
    let mut rng = rng_from_seed(13);
    let mut model = Model::dynamic(small_arch(), &[0.0, 0.0], &mut rng).unwrap();
    let Params::Dynamic { branch, .. } = &model.params else {
        unreachable!()
    };
    let init = branch[0].init;
    let per_draw = branch[0].psi.len();
    let mut sum = 0.0;
    let mut count = 0usize;
    for _ in 0..1000 {
        model.reinit_branch(&mut rng).unwrap();
        if let Params::Dynamic { branch, .. } = &model.params {
            sum += branch[0].psi.values.iter().sum::<f64>();
            count += per_draw;
        }
    }
    let mean = sum / count as f64;
    let se = (init.variance() / count as f64).sqrt();
    assert!((mean - init.mean()).abs() < 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn audit_partitions_budget() {
    let mut rng = rng_from_seed(14);
    let a = arch();
    let sizes = a.layer_sizes();
    let trunk_sum: usize = sizes[..2].iter().sum();
    let branch_sum: usize = sizes[2..].iter().sum();

    let dynamic = Model::dynamic(a.clone(), &[1e-4, 1e-4], &mut rng).unwrap();
    let audit = dynamic.audit();
    assert_eq!(audit.phi, trunk_sum);
    assert_eq!(audit.theta, trunk_sum);
    assert_eq!(audit.psi, branch_sum);
    assert_eq!(audit.budget, a.budget());
    assert_eq!(audit.phi + audit.psi, a.budget());

    let stat = Model::static_model(a.clone(), &mut rng).unwrap();
    assert_eq!(stat.audit().plain, a.budget());
    let lora = Model::lora_from(&stat, 4, 1.0, &mut rng).unwrap();
    let la = lora.audit();
    assert_eq!(la.frozen_base, a.budget());
    let want: usize = a.layer_shapes().iter().map(|(i, o)| 4 * (i + o)).sum();
    assert_eq!(la.adapter, want);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = rng_from_seed(15);
    let mut model = Model::dynamic(small_arch(), &[1e-4, 2e-4], &mut rng).unwrap();
    if let Params::Dynamic { trunk, .. } = &mut model.params {
        for t in trunk {
            t.theta.values.iter_mut().for_each(|v| *v = rng.gen::<f64>() * 1e-3);
        }
    }
    let back = Model::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back, model);
    for (a, b) in back
        .effective_blocks()
        .unwrap()
        .iter()
        .zip(model.effective_blocks().unwrap())
    {
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn bind_rejects_groups_outside_variant() {
    let mut rng = rng_from_seed(16);
    let stat = Model::static_model(small_arch(), &mut rng).unwrap();
    let mut tape = Tape::new();
    assert!(matches!(
        stat.bind(&mut tape, ParamGroup::Branch),
        Err(Error::Contract(_))
    ));
}

#[test]
fn linear_backbone_cannot_be_dynamic() {
    let mut rng = rng_from_seed(17);
    assert!(Model::dynamic(ArchitectureSpec::linear(60, 30), &[], &mut rng).is_err());
}
