use chernweil::invariant::InvariantPolynomial;
use chernweil::scenarios::{o_k, riemann_sphere, tangent_bundle};

#[test]
fn first_chern_number_of_o_k() {
    let cover = riemann_sphere(64).unwrap();
    let c1 = InvariantPolynomial::chern(1, 1);
    for k in 1..=3 {
        let lb = o_k(&cover, k).unwrap();
        let forms: Vec<_> = lb
            .connection
            .curvature()
            .unwrap()
            .iter()
            .map(|om| c1.evaluate(om).unwrap())
            .collect();
        let v = cover.integrate(&forms).unwrap();
        println!("k={k}: {v}");
        assert!((v.re - k as f64).abs() < 1e-3, "k={k}: {v}");
        assert!(v.im.abs() < 1e-6);
    }
}

#[test]
fn euler_number_of_the_sphere() {
    let cover = riemann_sphere(64).unwrap();
    let t = tangent_bundle(&cover).unwrap();
    let c1 = InvariantPolynomial::chern(1, 1);
    let forms: Vec<_> = t.connection.curvature().unwrap().iter().map(|om| c1.evaluate(om).unwrap()).collect();
    let v = cover.integrate(&forms).unwrap();
    assert!((v.re - 2.0).abs() < 1e-3, "{v}");
}
