use std::sync::Arc;
use metriplectic::fpe::{FluxScheme, FpeProblem};
use metriplectic::grid::{GridDistribution, PhaseGrid};
use metriplectic::systems;

fn main() {
    let grid = Arc::new(PhaseGrid::new(&[-7.0, -7.0], &[7.0, 7.0], &[128, 128]).unwrap());
    let prob = FpeProblem::new(&systems::canonical_2d(), grid.clone(), 0.2, FluxScheme::Centered).unwrap();
    let mut f = GridDistribution::normalized_from(grid.clone(), |x| {
        let dp = x[0] - 1.0; let dq = x[1];
        (-(dp*dp+dq*dq)/2.0).exp()
    }).unwrap();
    let dt = 0.002;
    let sp = grid.stride(0); let sq = grid.stride(1);
    let watch = grid.locate(&[6.95, 3.99]).unwrap();
    for s in 0..40 {
        let r1 = prob.fpe_rhs(&f, 1.0);
        let f1: Vec<f64> = f.values.iter().zip(&r1).map(|(v,r)| v + dt*r).collect();
        let (amin, min) = f1.iter().cloned().enumerate().fold((0, f64::INFINITY), |(ai,m),(i,v)| if v<m {(i,v)} else {(ai,m)});
        let c = if min < 0.0 { amin } else { watch };
        let x = grid.center(c);
        println!("step {s}: cell ({:.2},{:.2}) f={:+.3e} rhs={:+.3e} dt*rhs/f={:+.3} | stage min {:+.3e} at {:?}",
            x[0], x[1], f.values[c], r1[c], dt*r1[c]/f.values[c], min, grid.center(amin));
        if min < 0.0 && s > 0 {
            // dump neighborhood of amin
            let c = amin;
            let ip = grid.coord_along(c, 0); let iq = grid.coord_along(c, 1);
            println!("  neighborhood (p idx {ip}, q idx {iq}):");
            for (lbl, idx) in [("c", c), ("c-p", c.wrapping_sub(sp)), ("c+p", c+if ip<127 {sp} else {0}), ("c-q", c.wrapping_sub(sq)), ("c+q", c+if iq<127 {sq} else {0})] {
                println!("    {lbl}: f = {:+.4e}, rhs = {:+.4e}", f.values[idx], r1[idx]);
            }
            break;
        }
        let stage = GridDistribution { grid: grid.clone(), values: f1, time: 0.0 };
        let r2 = prob.fpe_rhs(&stage, 1.0);
        let out: Vec<f64> = (0..f.values.len()).map(|c| 0.5*(f.values[c] + stage.values[c] + dt*r2[c])).collect();
        f = GridDistribution { grid: grid.clone(), values: out, time: 0.0 };
    }
}
