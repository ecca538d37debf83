use chanscat::manifolds::*;
use chanscat::map::MapParams;

fn main() {
    let p = MapParams::symmetric();
    for &budget in &[30.0f64, 60.0, 120.0] {
        println!("== budget {budget}");
        for &l in &[0.0f64, 1.3, 2.6, 4.0, 5.71, 6.13] {
            let o = GrowOptions {
                seed_tol: 1e-9,
                classify_budget: 100_000,
                arclength_budget: budget,
                ds_max: 2e-3,
                ..GrowOptions::default()
            };
            let u = match compute_manifold(FixedPointSide::MinusInfinity, ManifoldKind::Unstable, l, &p, &o) {
                Ok(u) => u, Err(e) => { println!("L={l}: {e}"); continue }
            };
            let s = compute_manifold(FixedPointSide::MinusInfinity, ManifoldKind::Stable, l, &p, &o).unwrap();
            let full = polyline_intersections(&u.points, &s.points).len();
            let local = match fundamental_rectangle(l, &p, &o) {
                Ok(r) => polyline_intersections(&u.points, &r.arcs[3].points).len(),
                Err(_) => 99999,
            };
            println!("L={l:5.2}: full={full:6} local={local:5}  u_pts={:6} p_range [{:.2},{:.2}]",
                u.points.len(),
                u.points.iter().map(|z| z[1]).fold(f64::MAX, f64::min),
                u.points.iter().map(|z| z[1]).fold(f64::MIN, f64::max));
        }
    }
}
