use std::path::PathBuf;

use fedkrls::federation::{hospital_kernel, naive_protocol, run_fedcg, FedCgSession, HospitalNode, NaiveConfig};
use fedkrls::solver::{exact_gradient, reg_weights, row_major, solve_rrls_cg, solve_rrls_direct, CgState};
use fedkrls::topology::Topology;
use fedkrls::{
    exact, load_csv, normalize_train_test, partition, sample_landmarks, stratified_split, Dataset, Error, FedCgConfig,
    KernelSpec, LandmarkSet, Matrix, MessageKind, PartitionedDataset, RrlsProblem, Sampler, SamplerStats, SharedSeed,
    TransportKind,
};

fn fixture(name: &str) -> Dataset {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(format!("{name}.csv"));
    let positive = match name {
        "iris" => "setosa",
        "wine" => "class_0",
        "breast_cancer" => "malignant",
        "sonar" => "mine",
        _ => "good",
    };
    let ds = load_csv(path, "class", Some(positive)).unwrap();
    let (train, test) = stratified_split(&ds, 0.7, &SharedSeed::new(1, "split")).unwrap();
    normalize_train_test(&train, &test).unwrap().0
}

fn landmarks(ds: &Dataset, m: usize, seed: u64) -> LandmarkSet {
    sample_landmarks(Sampler::U, m, &SamplerStats::Dim(ds.d()), &SharedSeed::new(seed, "landmarks")).unwrap()
}

fn split(ds: &Dataset, n_h: usize, subsets: Vec<Vec<usize>>) -> PartitionedDataset {
    let t = Topology::with_providers(&ds.ids, ds.d(), n_h, subsets).unwrap();
    partition(ds, &t).unwrap()
}

fn two_way(d: usize) -> Vec<Vec<usize>> {
    vec![(0..d / 2).collect(), (d / 2..d).collect()]
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

fn central_problem(ds: &Dataset, lm: &LandmarkSet, spec: &KernelSpec, subsets: Vec<Vec<usize>>, lambda: f64) -> RrlsProblem {
    let data = split(ds, 1, subsets);
    let k = hospital_kernel(&data, 1, lm, spec).unwrap().values;
    RrlsProblem::new(k, ds.y.clone(), lambda).unwrap()
}

#[test]
fn fedcg_is_bit_identical_to_centralized_cg() {
    let ds = fixture("iris");
    let lm = landmarks(&ds, 20, 5);
    let spec = KernelSpec::shared(1.0 / ds.d() as f64);
    let cfg = FedCgConfig::new(20, 1e-3, 1e-12, 500, 9);
    let central = run_fedcg(&split(&ds, 1, two_way(ds.d())), &lm, &spec, cfg.clone(), TransportKind::Bus).unwrap();
    let p = central_problem(&ds, &lm, &spec, two_way(ds.d()), 1e-3);
    let (alpha, trace) = solve_rrls_cg(&p, &cfg.alpha0, cfg.toll, cfg.max_epochs).unwrap();
    assert_eq!(central.alpha, alpha);
    assert_eq!(central.trace, trace);
    for n_h in 2..=5 {
        let fed = run_fedcg(&split(&ds, n_h, two_way(ds.d())), &lm, &spec, cfg.clone(), TransportKind::Bus).unwrap();
        assert_eq!(fed.alpha, central.alpha, "{n_h} hospitals");
        assert_eq!(fed.trace.records, central.trace.records);
    }
}

#[test]
fn fedcg_matches_direct_solve() {
    let ds = fixture("wine");
    let lm = landmarks(&ds, 30, 6);
    let spec = KernelSpec::shared(1.0 / ds.d() as f64);
    for n_h in [2, 3] {
        let cfg = FedCgConfig::new(30, 1e-3, 1e-22, 500, 2);
        let fed = run_fedcg(&split(&ds, n_h, two_way(ds.d())), &lm, &spec, cfg, TransportKind::Bus).unwrap();
        assert!(fed.trace.converged);
        let direct = solve_rrls_direct(&central_problem(&ds, &lm, &spec, two_way(ds.d()), 1e-3)).unwrap();
        assert!(rel(&fed.alpha, &direct) < 1e-8);
    }
}

#[test]
fn masking_noise_cancels_exactly() {
    let ds = fixture("iris");
    let lm = landmarks(&ds, 10, 1);
    let spec = KernelSpec::shared(0.25);
    let mut cfg = FedCgConfig::new(10, 1e-3, 1e-10, 500, 4);
    cfg.alpha0 = (0..10).map(|j| 0.1 * j as f64 - 0.3).collect();
    let gradient = |n_h: usize, masking: bool| {
        let mut c = cfg.clone();
        c.masking = masking;
        let mut s = FedCgSession::start(&split(&ds, n_h, two_way(4)), &lm, &spec, c, TransportKind::Bus).unwrap();
        let g = s.initialize().unwrap().g.clone();
        s.finish().unwrap();
        g
    };
    let reference = gradient(1, false);
    assert_eq!(gradient(3, true), reference);
    let p = central_problem(&ds, &lm, &spec, two_way(4), 1e-3);
    assert_eq!(reference, exact_gradient(&row_major(&p.k), &cfg.alpha0, &p.y, 1e-3));
    let dense = p.k.transpose() * (&p.k * Matrix::from_column_slice(10, 1, &cfg.alpha0) - Matrix::from_column_slice(p.n(), 1, &p.y))
        + Matrix::from_column_slice(10, 1, &cfg.alpha0) * 1e-3;
    for (a, b) in reference.iter().zip(dense.iter()) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn zero_labels_from_zero_start_converge_immediately() {
    let ds = fixture("iris");
    let lm = landmarks(&ds, 8, 1);
    let mut data = split(&ds, 2, two_way(4));
    for y in data.labels.values_mut() {
        y.fill(0.0);
    }
    let out = run_fedcg(&data, &lm, &KernelSpec::shared(0.25), FedCgConfig::new(8, 1e-3, 1e-10, 50, 1), TransportKind::Bus).unwrap();
    assert!(out.trace.converged);
    assert_eq!(out.trace.stop_epoch, 0);
    assert!(out.state.g.iter().all(|v| *v == 0.0) && out.state.p.iter().all(|v| *v == 0.0));
}

#[test]
fn zero_direction_is_rejected() {
    let mut s = CgState::from_gradient(vec![0.0; 3], vec![1.0, 0.0, 0.0]);
    s.p = vec![0.0; 3];
    assert!(matches!(s.apply(&[0.0; 3], 0.0, 1e-10), Err(Error::IndefiniteSystem { .. })));
}

#[test]
fn seed_mismatch_aborts_the_run() {
    let ds = fixture("iris");
    let lm = landmarks(&ds, 8, 1);
    let mut cfg = FedCgConfig::new(8, 1e-3, 1e-10, 50, 1);
    cfg.hospital_seeds.insert(2, 99);
    let err = run_fedcg(&split(&ds, 3, two_way(4)), &lm, &KernelSpec::shared(0.25), cfg, TransportKind::Bus).unwrap_err();
    assert!(matches!(err, Error::SeedMismatch { party: 2 }), "{err}");
}

#[test]
fn tcp_and_bus_agree() {
    let ds = fixture("iris");
    let lm = landmarks(&ds, 12, 3);
    let spec = KernelSpec::shared(0.25);
    let cfg = FedCgConfig::new(12, 1e-3, 1e-10, 200, 3);
    let data = split(&ds, 3, two_way(4));
    let bus = run_fedcg(&data, &lm, &spec, cfg.clone(), TransportKind::Bus).unwrap();
    let tcp = run_fedcg(&data, &lm, &spec, cfg, TransportKind::Tcp).unwrap();
    assert_eq!(bus.alpha, tcp.alpha);
    assert_eq!(bus.digests, tcp.digests);
    assert_eq!(bus.transcript.counts(), tcp.transcript.counts());
}

#[test]
fn every_party_holds_the_same_state() {
    let ds = fixture("breast_cancer");
    let lm = landmarks(&ds, 15, 8);
    let out = run_fedcg(&split(&ds, 4, two_way(ds.d())), &lm, &KernelSpec::shared(1.0 / 30.0), FedCgConfig::new(15, 1e-3, 1e-10, 200, 8), TransportKind::Bus)
        .unwrap();
    assert!(out.replicated());
    assert_eq!(out.digests.len(), 5);
    assert_eq!(out.digests[&0].len(), out.trace.records.len());
    assert_eq!(out.hospital_alpha.len(), 4);
    assert!(out.hospital_alpha.values().all(|a| *a == out.alpha));
}

#[test]
fn fedcg_transcript_carries_no_raw_data() {
    let ds = fixture("wine");
    let subsets = vec![(0..5).collect(), (5..9).collect(), (9..13).collect()];
    let data = split(&ds, 3, subsets.clone());
    let lm = landmarks(&ds, 10, 2);
    let out = run_fedcg(&data, &lm, &KernelSpec::shared(1.0 / 13.0), FedCgConfig::new(10, 1e-3, 1e-10, 200, 2), TransportKind::Bus).unwrap();
    let rows: Vec<Vec<f64>> = (0..ds.n()).map(|i| ds.row(i)).collect();
    let slices: Vec<Vec<f64>> = rows.iter().flat_map(|r| subsets.iter().map(move |s| s.iter().map(|&f| r[f]).collect())).collect();
    let mut labels: Vec<Vec<f64>> = data.labels.values().cloned().collect();
    labels.push(ds.y.clone());
    let report = out.transcript.audit(&rows, &slices, &labels);
    assert!(report.clean(), "{report:?}");
    assert_eq!(out.transcript.count(MessageKind::NaiveKernelBlock), 0);
    assert_eq!(out.transcript.count(MessageKind::MaskedLabels), 0);
}

#[test]
fn naive_protocol_matches_pooled_training() {
    let ds = fixture("iris");
    let lm = landmarks(&ds, 12, 4);
    let spec = KernelSpec::shared(0.25);
    let topo = Topology::shared_first_half(&ds.ids, ds.d()).unwrap();
    let data = partition(&ds, &topo).unwrap();
    let cfg = NaiveConfig { lambda: 1e-3, toll: 1e-12, max_epochs: 500, seed: 7, alpha0: vec![0.0; 12] };
    let naive = naive_protocol(&data, &lm, &spec, &cfg, TransportKind::Bus).unwrap();
    assert_eq!(naive.labels, ds.y);
    assert_eq!(naive.transcript.count(MessageKind::NaiveKernelBlock), 4);
    let central = run_fedcg(&split(&ds, 1, two_way(4)), &lm, &spec, FedCgConfig::new(12, 1e-3, 1e-12, 500, 7), TransportKind::Bus).unwrap();
    assert!(rel(&naive.alpha, &central.alpha) < 1e-10);
    let rows: Vec<Vec<f64>> = (0..ds.n()).map(|i| ds.row(i)).collect();
    let report = naive.transcript.audit(&rows, &[], &[ds.y.clone()]);
    assert_eq!(report.row_leaks + report.label_leaks, 0);
    assert!(report.naive_blocks > 0);
}

#[test]
fn naive_single_party_reduces_to_cg() {
    let ds = fixture("iris");
    let lm = landmarks(&ds, 6, 4);
    let spec = KernelSpec::shared(0.25);
    let data = split(&ds, 1, vec![(0..4).collect()]);
    let cfg = NaiveConfig { lambda: 1e-3, toll: 1e-10, max_epochs: 100, seed: 3, alpha0: vec![0.0; 6] };
    let naive = naive_protocol(&data, &lm, &spec, &cfg, TransportKind::Bus).unwrap();
    let p = central_problem(&ds, &lm, &spec, vec![(0..4).collect()], 1e-3);
    assert_eq!(naive.kernel, p.k);
    assert_eq!(naive.alpha, solve_rrls_cg(&p, &cfg.alpha0, 1e-10, 100).unwrap().0);
}

#[test]
fn regularization_split_sums_exactly() {
    for n in 1..=5 {
        let w = reg_weights(n);
        assert_eq!(w.len(), n);
        assert_eq!(exact::sum(&w), 1.0);
    }
}

#[test]
fn federated_gradient_examples() {
    let ds = fixture("iris");
    let lm = landmarks(&ds, 7, 2);
    let spec = KernelSpec::shared(0.25);
    let cfg = FedCgConfig::new(7, 1e-3, 1e-10, 50, 1);
    let alpha: Vec<f64> = (0..7).map(|j| 0.2 * j as f64 - 0.5).collect();
    let one = split(&ds, 2, vec![(0..4).collect()]);
    let node = HospitalNode::build(1, &one, &lm, &spec, &cfg).unwrap();
    let n1 = node.n_samples();
    let (ktkp, v) = node.federated_gradient(&alpha, &[0.0; 7], &vec![0.0; n1]);
    assert!(ktkp.iter().all(|v| *v == 0.0));
    let k = hospital_kernel(&one, 1, &lm, &spec).unwrap().values;
    let dense = &k * Matrix::from_column_slice(7, 1, &alpha);
    for i in 0..n1 {
        assert!((v[i] - (dense[i] - one.labels_of(1).unwrap()[i])).abs() < 1e-12);
    }
    let two = split(&ds, 2, vec![vec![0, 1], vec![2, 3]]);
    let node2 = HospitalNode::build(1, &two, &lm, &spec, &cfg).unwrap();
    let p: Vec<f64> = (0..7).map(|j| 1.0 - 0.3 * j as f64).collect();
    let a = node.federated_gradient(&alpha, &p, &vec![0.0; n1]).0;
    let b = node2.federated_gradient(&alpha, &p, &vec![0.0; n1]).0;
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
    }
}
