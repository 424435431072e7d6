use masshell::scattering::*;
use masshell::spectrum::{partial_fractions, MassSpectrum};
use num_complex::Complex64;
use std::time::Instant;

fn main() {
    let spin = vec![Complex64::new(1.0, 0.0)];
    let q = (2.2_f64 * 2.2 / 4.0 - 1.0).sqrt();
    let grid = [5.0, 10.0, 20.0, 40.0, 80.0, 160.0];

    for (label, entries) in [
        ("all simple", vec![(2.2, 1u32), (1.0, 1u32)]),
        ("light nu=2", vec![(2.2, 1), (1.0, 2)]),
    ] {
        let s = MassSpectrum::new(entries).unwrap();
        let pf = partial_fractions(&s);
        let p_in = make_packet(&s, 0, vec![0.0], 0.35, 0.5, spin.clone(), vec![0.0]).unwrap();
        let p1 = make_packet(&s, 1, vec![q], 0.3, 0.5, spin.clone(), vec![0.0]).unwrap();
        let p2 = make_packet(&s, 1, vec![-q], 0.3, 0.5, spin.clone(), vec![0.0]).unwrap();
        let packets = vec![p_in, p1, p2];
        let config = SplitConfig::in_out(1);
        let t0 = Instant::now();
        match divergence_scan(&s, &pf, None, &packets, &config, &grid, 2, &OverlapOpts::default(), 7) {
            Ok(res) => println!(
                "{label}: fitted_r = {:.3}, residual = {:.3}, converged = {}, mags = {:?}  [{:?}]",
                res.fitted_r, res.residual, res.converged,
                res.magnitudes.iter().map(|m| format!("{m:.3e}")).collect::<Vec<_>>(),
                t0.elapsed()
            ),
            Err(e) => println!("{label}: ERR {e}  [{:?}]", t0.elapsed()),
        }
    }
}
