// scratch: cost scaling and monotonicity at deeper refinement levels
use bhshock::evolve::{self, EvolveConfig};
use bhshock::grid::Grid1D;
use bhshock::initdata::build_initial_physical;
use bhshock::profile::u2_nu_eval;
use bhshock::selfsim::to_selfsimilar;
use bhshock::shooting::ShootConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let max_ref: usize = args[1].parse().unwrap();
    let stop_slope: f64 = args[2].parse().unwrap();
    let oe: usize = args[3].parse().unwrap();

    let cfg = ShootConfig {
        grid_points: 1 << 14,
        ..ShootConfig::default()
    };
    let grid = cfg.grid().unwrap();
    let mut init = cfg.init.clone().with_parameters(0.02521603587348e0, -1.050438485831e-4);
    init.epsilon = cfg.epsilon;
    let u0 = build_initial_physical(&init, grid).unwrap();
    let ev = EvolveConfig {
        stop_slope,
        t_max: 0.2,
        output_every: oe,
        max_refinements: max_ref,
        refine_spacings: 16.0,
        ..EvolveConfig::default()
    };
    let t0 = std::time::Instant::now();
    let traj = evolve::run(&u0, -cfg.epsilon, &ev).unwrap();
    println!("run took {:?}, frames {}", t0.elapsed(), traj.frames.len());
    let bytes: usize = traj.frames.iter().map(|f| f.grid().len() * 8).sum();
    println!("frame storage ~{} MB", bytes / (1 << 20));

    let x_grid = Grid1D::new(-6.0, 6.0, 512).unwrap();
    let nu = 119.92243477183163;
    let mut rows = Vec::new();
    for (u, m) in traj.frames.iter().zip(&traj.modulation) {
        let gap = m.tau - u.time;
        if gap.powf(1.25) < 24.0 * u.grid().spacing() {
            continue;
        }
        let f = to_selfsimilar(u, u.time, m, x_grid).unwrap();
        let mut sup = 0.0f64;
        for (x, v) in f.u.grid().points().zip(f.u.values()) {
            if x.abs() <= 5.0 {
                sup = sup.max((v - u2_nu_eval(x, nu).unwrap()).abs());
            }
        }
        rows.push((f.s, sup, u.grid().len()));
    }
    let s_end = rows.last().unwrap().0;
    let s_start = rows.first().unwrap().0;
    println!("window [{:.4}, {:.4}], mid {:.4}", s_start, s_end, 0.5 * (s_start + s_end));
    // report violations of strict decrease after the midpoint, and peak
    let mid = 0.5 * (s_start + s_end);
    let mut peak = (0.0f64, 0.0f64);
    let mut viol = 0;
    for w in rows.windows(2) {
        if w[1].1 > peak.1 {
            peak = (w[1].0, w[1].1);
        }
        if w[0].0 >= mid && w[1].1 >= w[0].1 {
            viol += 1;
            if viol < 8 {
                println!("  violation {:.4} {:.6e} -> {:.4} {:.6e}", w[0].0, w[0].1, w[1].0, w[1].1);
            }
        }
    }
    println!("peak at s={:.4} err={:.4e}; violations past mid: {}", peak.0, peak.1, viol);
    for r in rows.iter().rev().take(4) {
        println!("  tail {:.4} {:.6e} n={}", r.0, r.1, r.2);
    }
}
