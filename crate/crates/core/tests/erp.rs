use ndarray::{array, Array2};
use wcst_core::eeg_io::{labels, standard_channels, ChannelInfo, ChannelRole, Marker, Recording};
use wcst_core::erp::{
    balance_and_average, build_adjacency, cluster_permutation, cluster_permutation_exact, difference_wave, epoch,
    epoch_times, significance_mask, t_map, topo_windows, Adjacency, ClusterOptions, Condition, Lock, Polarity,
};

fn ramp_recording(markers: Vec<Marker>) -> Recording<f64> {
    let ch = ["Fz", "Cz", "TP9"].iter().map(|n| ChannelInfo::from_label(n, &["TP9"])).collect();
    let data = Array2::from_shape_fn((3, 2000), |(c, s)| (c + 1) as f64 * s as f64);
    Recording::new(100.0, ch, data, markers).unwrap()
}

#[test]
fn epochs_are_baseline_corrected_eeg_windows() {
    let rec = ramp_recording(vec![
        Marker::stimulus(500, labels::COND_CONF),
        Marker::stimulus(5, labels::COND_SEARCH),
        Marker::stimulus(900, labels::FB_COR),
    ]);
    let set = epoch(&rec, Lock::Stimulus, "p1").unwrap();
    assert_eq!(set.epochs.len(), 1);
    assert_eq!(set.skipped, 1);
    assert_eq!(set.channels.len(), 2, "EOG channel dropped");
    let e = &set.epochs[0];
    assert_eq!(e.data.dim(), (2, 60));
    // baseline of a unit ramp over 10 samples is its mean, 4.5 below the event
    assert_eq!(e.data[[0, 10]], 5.5);
    assert_eq!(e.data[[1, 0]], 2.0 * -4.5);
    assert_eq!(epoch_times(100.0)[10], 0.0);
    assert!(epoch(&rec, Lock::Feedback, "p1").unwrap().count(Condition::Cor) == 1);
}

#[test]
fn balancing_subsamples_the_larger_condition() {
    let mut markers: Vec<Marker> = (0..3).map(|k| Marker::stimulus(100 + 100 * k, labels::COND_CONF)).collect();
    markers.extend((0..5).map(|k| Marker::stimulus(1000 + 100 * k, labels::COND_SEARCH)));
    let rec = ramp_recording(markers);
    let set = epoch(&rec, Lock::Stimulus, "p1").unwrap();
    let (a, b) = balance_and_average(&set, (Condition::Conf, Condition::Search), 9).unwrap();
    assert_eq!((a.n_trials, b.n_trials), (3, 3));
    // a ramp minus its baseline is the same for every epoch
    assert_eq!(a.data, set.epochs[0].data);
    let d = difference_wave(&a, &b).unwrap();
    assert!(d.iter().all(|v| v.abs() < 1e-9));
    assert_eq!(balance_and_average(&set, (Condition::Conf, Condition::Search), 9).unwrap(), (a, b));
    assert!(balance_and_average(&set, (Condition::Cor, Condition::Inc), 9).is_err());
}

#[test]
fn t_map_matches_hand_value() {
    let deltas: Vec<Array2<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| array![[v, 0.0]]).collect();
    let t = t_map(&deltas).unwrap();
    // mean 2.5, sd sqrt(5/3), n 4
    assert!((t[[0, 0]] - 2.5 / ((5.0f64 / 3.0).sqrt() / 2.0)).abs() < 1e-12);
    assert_eq!(t[[0, 1]], 0.0);
}

/// Four identical participants: the observed mass is the maximum, reached
/// only by the identity and its complement, so exact p = 2/16.
#[test]
fn exact_p_of_a_hand_built_cluster() {
    let mut x = Array2::<f64>::zeros((3, 5));
    for &(c, s) in &[(0, 1), (0, 2), (1, 1)] {
        x[[c, s]] = 1.0;
    }
    x[[2, 4]] = -1.0;
    let deltas = vec![x.clone(); 4];
    let chain = Adjacency::from_edges(3, &[(0, 1), (1, 2)]);
    let opts = ClusterOptions::default();
    let out = cluster_permutation_exact(&deltas, &chain, &opts).unwrap();
    assert_eq!(out.clusters.len(), 2);
    let pos = out.clusters.iter().find(|c| c.polarity == Polarity::Positive).unwrap();
    assert_eq!(pos.members, vec![(0, 1), (0, 2), (1, 1)]);
    assert_eq!(pos.p_value, 2.0 / 16.0);
    assert_eq!(out.null.len(), 16);

    let split = cluster_permutation_exact(&deltas, &Adjacency::from_edges(3, &[]), &opts).unwrap();
    assert_eq!(split.clusters.len(), 3);

    let mc = cluster_permutation(&deltas, &chain, &ClusterOptions { n_permutations: 4000, ..opts }).unwrap();
    let mc_pos = mc.clusters.iter().find(|c| c.polarity == Polarity::Positive).unwrap();
    assert!((mc_pos.p_value - 0.125).abs() < 0.02, "{}", mc_pos.p_value);
    assert_eq!(cluster_permutation(&deltas, &chain, &ClusterOptions { n_permutations: 4000, ..opts }).unwrap(), mc);
}

#[test]
fn adjacency_thresholds() {
    let eeg: Vec<ChannelInfo> = standard_channels().into_iter().filter(|c| c.role == ChannelRole::Eeg).collect();
    let n = eeg.len();
    assert_eq!(build_adjacency(&eeg, 0.0).unwrap().n_edges(), 0);
    assert_eq!(build_adjacency(&eeg, 2.1).unwrap().n_edges(), n * (n - 1) / 2);
    let adj = build_adjacency(&eeg, 0.4).unwrap();
    assert!((0..n).all(|c| !adj.neighbors(c).is_empty()));
    let fz = eeg.iter().position(|c| c.name == "Fz").unwrap();
    let oz = eeg.iter().position(|c| c.name == "Oz").unwrap();
    assert!(!adj.neighbors(fz).contains(&oz));
    let unknown = vec![ChannelInfo::from_label("Xyz", &[])];
    assert!(build_adjacency(&unknown, 0.4).is_err());
}

#[test]
fn topo_windows_average_their_samples() {
    let times: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let map = Array2::from_shape_fn((2, 10), |(c, s)| if c == 0 { times[s] } else { 1.0 });
    let mut mask = Array2::from_elem((2, 10), false);
    mask[[1, 7]] = true;
    let w = topo_windows(&map, &times, Some(&mask), 0.0, 1.0, 0.5).unwrap();
    assert_eq!(w.len(), 2);
    assert!((w[0].values[0] - 0.2).abs() < 1e-12 && (w[1].values[0] - 0.7).abs() < 1e-12);
    assert_eq!(w[1].significant, [false, true]);
    assert!(topo_windows(&map, &times, None, 0.0, 2.0, 0.5).is_err());
    assert_eq!(significance_mask((2, 2), &[]), Array2::from_elem((2, 2), false));
}
