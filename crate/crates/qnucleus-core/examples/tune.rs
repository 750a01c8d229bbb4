use qnucleus_core::*;
use qnucleus_core::hats::{generate_family, voxelize_hat, HatFamily, HatVoxelization};
use qnucleus_core::glue::GlueRegion;
use qnucleus_core::bump::{hat_bump, BumpParams};
use std::sync::Arc;

fn main() {
    let c = Arc::new(ChartBox::cube(2, 2.0, 16).unwrap());
    let ambient = AmbientDomain::full_box(c.clone());
    let k = voxelize(|p: &CPoint| p.norm() <= 0.8, c.clone(), VoxelizeMode::Centers);
    let mut cfg = HatFamily::new(2);
    cfg.stride = 4;
    cfg.radii = vec![0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75];
    cfg.scales = vec![0.7, 1.0, 1.3, 1.6, 1.9];
    let family = generate_family(&cfg, &ambient);
    let run = approximate_nucleus(&k, 1, &family, &ambient, 50).unwrap();
    println!("residual={} cuts={}", run.residual.count(), run.sequence.records.len());
    let chain: Vec<_> = run.sequence.records.iter().filter(|r| !r.skipped).collect();
    let m = chain.len();
    let params = BumpParams::default();
    // replicate the induction, printing seam ratio windows per step
    let last = &chain[m-1];
    let mut dom = voxelize_hat(&last.pair, &c, HatVoxelization::InteriorConservative);
    let mut fields: Vec<(ScalarField, f64)> = vec![(hat_bump(&last.pair, 1, &params).unwrap(), 1.0)];
    let eval = |fields: &[(ScalarField, f64)], p: &CPoint| -> f64 {
        fields.iter().filter_map(|(f, s)| f.value(p).ok().map(|v| s * v)).fold(f64::NEG_INFINITY, f64::max)
    };
    for j in (0..m-1).rev() {
        let k_j = &chain[j].before;
        let pair_j = &chain[j].pair;
        let v1 = dom.clone();
        let v2 = voxelize_hat(pair_j, &c, HatVoxelization::InteriorConservative);
        let region = GlueRegion::new(&v1, &v2, k_j).unwrap();
        let phi = hat_bump(pair_j, 1, &params).unwrap();
        let mut max_in: f64 = f64::NEG_INFINITY;
        let mut min_out: f64 = f64::INFINITY;
        let mut phi_in_min = f64::INFINITY;
        for idx in region.seam_in.iter_ones() {
            let p = c.cell_center(idx);
            let pv = phi.value(&p).unwrap();
            phi_in_min = phi_in_min.min(pv);
            if pv > 1e-12 { max_in = max_in.max(eval(&fields, &p) / pv); }
        }
        for idx in region.seam_out.iter_ones() {
            let p = c.cell_center(idx);
            let pv = phi.value(&p).unwrap();
            if pv > 0.0 { min_out = min_out.min(eval(&fields, &p) / pv); }
        }
        println!("step {j}: |in|={} |out|={} max_in={:.3e} min_out={:.3e} window={} phi_in_min={:.2e}",
            region.seam_in.count(), region.seam_out.count(), max_in, min_out,
            if max_in < min_out {"YES"} else {"NO"}, phi_in_min);
        // apply the max-glue regardless (mimic): c choice sqrt if feasible else 1.5*max_in
        let cc = if max_in.is_finite() && min_out.is_finite() && max_in > 0.0 && min_out > max_in {
            (max_in * min_out).sqrt()
        } else if max_in.is_finite() && max_in > 0.0 { 1.5 * max_in } else { 1.0 };
        fields.push((phi, cc));
        dom = dom.union(&v2).unwrap();
    }
}
