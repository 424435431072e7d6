use masshell::scattering::*;
use masshell::spectrum::{partial_fractions, MassSpectrum};
use masshell::wightman::{attach_prefactor, build_wightman_terms, TwoPointMode};
use num_complex::Complex64;

fn main() {
    // open 3-point kinematics: heavy (m=2.2) <- light + light (m=1)
    let s = MassSpectrum::new(vec![(2.2, 1), (1.0, 1)]).unwrap();
    let pf = partial_fractions(&s);
    let spin = vec![Complex64::new(1.0, 0.0)];
    let q = (2.2_f64 * 2.2 / 4.0 - 1.0).sqrt(); // on-shell out momentum at P=0
    println!("q* = {q}");
    let p_in = make_packet(&s, 0, vec![0.0], 0.35, 0.5, spin.clone(), vec![0.0]).unwrap();
    let p_out1 = make_packet(&s, 1, vec![q], 0.3, 0.5, spin.clone(), vec![0.0]).unwrap();
    let p_out2 = make_packet(&s, 1, vec![-q], 0.3, 0.5, spin.clone(), vec![0.0]).unwrap();
    let packets = vec![p_in, p_out1, p_out2];
    let config = SplitConfig::in_out(1);
    let opts = OverlapOpts::default();

    let terms = {
        let mut t = build_wightman_terms(&s, &pf, 3, 2, TwoPointMode::Validated).unwrap();
        let _ = &mut t;
        t
    };
    let amp = scattering_amplitude(&s, &pf, None, &packets, &config, &[1.0, 1.0], 2, &opts).unwrap();
    println!("closed-form amplitude: {amp}  |A| = {}", amp.norm());
    for t in [40.0, 80.0] {
        for (os_, mn) in [(2.6, 48usize), (4.0, 64), (6.0, 96)] {
            let mut o2 = OverlapOpts::default();
            o2.oversample = os_;
            o2.min_nodes = mn;
            let v = finite_time_overlap(&terms, &s, &packets, &config, t, 2, &o2).unwrap();
            let rel = (v - amp).norm() / amp.norm().max(1e-300);
            println!("t={t:6} os={os_} mn={mn}: overlap {v}  rel-dev {rel:.3e}");
        }
    }
    // amplitude refinement sanity
    let mut o3 = OverlapOpts::default();
    o3.min_nodes = 96;
    let amp2 = scattering_amplitude(&s, &pf, None, &packets, &config, &[1.0, 1.0], 2, &o3).unwrap();
    println!("amp refined: {amp2}  diff {:.3e}", (amp2-amp).norm()/amp.norm());
    let _ = attach_prefactor019; // placeholder
}
#[allow(non_upper_case_globals)]
const attach_prefactor019: () = ();
