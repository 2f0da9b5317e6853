use commeig_core::density::k_n_functional;
use commeig_core::equilibrium::{discrete_energy, equilibrium_radius, minimize_energy};
use commeig_core::ExternalField;

// For Q = x²/2 on the line the equilibrium law is the radius-2 semicircle with
// logarithmic energy 3/4.
const SEMICIRCLE_ENERGY: f64 = 0.75;

#[test]
fn discrete_minima_rise_toward_the_continuum_energy() {
    let q = ExternalField::gaussian(0.5);
    let energies: Vec<f64> = [25, 50, 100, 200].iter().map(|&n| minimize_energy(n, 1, &q, 5, 20_000, 1e-7).unwrap().energy).collect();
    println!("minimizer energies at n = 25, 50, 100, 200: {energies:?}");
    assert!(energies.windows(2).all(|w| w[1] > w[0]));
    assert!(energies.iter().all(|&e| e < SEMICIRCLE_ENERGY));
    // the deficit is dominated by the removed self-energy, about log(n)/n
    let deficit_200 = SEMICIRCLE_ENERGY - energies[3];
    assert!((deficit_200 / (200f64.ln() / 200.0) - 1.0).abs() < 0.2, "{deficit_200}");
}

#[test]
fn scaled_k_n_of_minimizers_tracks_the_energy() {
    let q = ExternalField::gaussian(0.5);
    for n in [50, 100] {
        let r = minimize_energy(n, 1, &q, 7, 20_000, 1e-7).unwrap();
        let k = k_n_functional(&r.config, &q).unwrap() / (n * n) as f64;
        let field: f64 = (0..n).map(|i| q.eval_real(&r.config.real_point(i))).sum::<f64>() / (n * n) as f64;
        assert!((k + field - discrete_energy(&r.config, &q).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn one_dimensional_support_is_the_semicircle_interval() {
    let r = minimize_energy(100, 1, &ExternalField::gaussian(0.5), 1, 20_000, 1e-7).unwrap();
    let radius = equilibrium_radius(1, 0.5);
    let max = (0..100).map(|i| r.config.real_point(i)[0].abs()).fold(0.0, f64::max);
    assert!(max <= radius + 0.05 && max > 0.9 * radius, "{max}");
}
