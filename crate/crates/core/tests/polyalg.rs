use pdemom::polyalg::{binomial, mono_basis, MultiIndex, Polynomial, VariableSpace};
use proptest::prelude::*;

fn xs(n: usize) -> VariableSpace {
    VariableSpace::coordinates(n)
}

fn p(space: &VariableSpace, s: &str) -> Polynomial {
    Polynomial::parse(s, space).unwrap()
}

fn poly_strategy(dim: usize, max_deg: u32) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(
        (prop::collection::vec(0..=max_deg, dim), -5.0f64..5.0),
        0..6,
    )
    .prop_map(move |terms| {
        let space = xs(dim);
        Polynomial::from_terms(
            &space,
            terms.into_iter().filter_map(|(e, c)| {
                (e.iter().sum::<u32>() <= max_deg).then(|| (MultiIndex::from_exponents(&e), c))
            }),
        )
    })
}

fn close(a: &Polynomial, b: &Polynomial, tol: f64) -> bool {
    (a - b).max_abs_coeff() <= tol * (1.0 + a.max_abs_coeff().max(b.max_abs_coeff()))
}

#[test]
fn graded_basis_listing() {
    let space = xs(2);
    let names: Vec<String> = mono_basis(2, 3)
        .into_iter()
        .map(|m| Polynomial::monomial(&space, m, 1.0).to_string())
        .collect();
    assert_eq!(
        names,
        ["1.0", "x1", "x2", "x1^2", "x1*x2", "x2^2", "x1^3", "x1^2*x2", "x1*x2^2", "x2^3"]
    );
    assert_eq!(mono_basis(5, 0), vec![MultiIndex::zero(5)]);
    assert_eq!(mono_basis(4, 4).len(), 70);
}

#[test]
fn basis_length_is_binomial() {
    for dim in 1..=6 {
        for d in 0..=10u32 {
            assert_eq!(mono_basis(dim, d).len() as u64, binomial((dim as u64) + d as u64, d as u64));
        }
    }
}

#[test]
fn arithmetic_examples() {
    let s = xs(2);
    assert_eq!(&p(&s, "x1 + 1") * &p(&s, "x1 - 1"), p(&s, "x1^2 - 1"));
    assert!((&p(&s, "3*x1*x2 + x2") * &Polynomial::zero(&s)).is_zero());
    let pde = VariableSpace::pde(2, 1, 0);
    assert_eq!(&p(&pde, "y1*z1_2") * &p(&pde, "y1"), p(&pde, "y1^2*z1_2"));
}

#[test]
fn derivative_examples() {
    let s = xs(2);
    assert_eq!(p(&s, "x1^2*x2").diff(0), p(&s, "2*x1*x2"));
    assert!(p(&s, "7").diff(1).is_zero());
    let pde = VariableSpace::pde(2, 1, 0);
    let y = pde.index_of("y1").unwrap();
    assert_eq!(p(&pde, "y1^3*z1_1").diff(y), p(&pde, "3*y1^2*z1_1"));
}

#[test]
fn composition_examples() {
    let s = xs(1);
    assert_eq!(p(&s, "x1").compose(&[p(&s, "5*x1")]).unwrap(), p(&s, "5*x1"));
    let (a, b) = (2.0, 3.0);
    let img = p(&s, &format!("{a} + {b}*x1"));
    assert_eq!(
        p(&s, "x1^2").compose(&[img]).unwrap(),
        p(&s, &format!("{} + {}*x1 + {}*x1^2", a * a, 2.0 * a * b, b * b))
    );
    let q = p(&xs(2), "x1^3 - 2*x1*x2 + 4");
    let id = [p(&xs(2), "x1"), p(&xs(2), "x2")];
    assert_eq!(q.compose(&id).unwrap(), q);
}

#[test]
fn evaluation_examples() {
    let s = xs(2);
    assert_eq!(p(&s, "x1*x2").eval(&[2.0, 3.0]), 6.0);
    assert_eq!(Polynomial::zero(&s).eval(&[1.5, -2.0]), 0.0);
    assert!((p(&s, "10*(x2*(1-x2))^2").eval(&[0.0, 0.5]) - 0.625).abs() < 1e-15);
}

#[test]
fn graded_order_puts_lower_degrees_first() {
    let basis = mono_basis(3, 5);
    for w in basis.windows(2) {
        assert!(w[0] < w[1]);
        assert!(w[0].degree() <= w[1].degree());
    }
}

proptest! {
    #[test]
    fn order_is_total(a in prop::collection::vec(0u32..4, 3), b in prop::collection::vec(0u32..4, 3)) {
        let (ma, mb) = (MultiIndex::from_exponents(&a), MultiIndex::from_exponents(&b));
        let relations = [ma < mb, ma == mb, ma > mb];
        prop_assert_eq!(relations.iter().filter(|&&r| r).count(), 1);
        if ma.degree() < mb.degree() {
            prop_assert!(ma < mb);
        }
    }

    #[test]
    fn distributive(p in poly_strategy(3, 3), q in poly_strategy(3, 3), r in poly_strategy(3, 3)) {
        let lhs = &(&p + &q) * &r;
        let rhs = &(&p * &r) + &(&q * &r);
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn derivative_is_linear_and_leibniz(p in poly_strategy(3, 4), q in poly_strategy(3, 4), a in -3.0f64..3.0, v in 0usize..3) {
        let lin = (&p.scale(a) + &q).diff(v);
        prop_assert!(close(&lin, &(&p.diff(v).scale(a) + &q.diff(v)), 1e-12));
        let prod = (&p * &q).diff(v);
        let leibniz = &(&p.diff(v) * &q) + &(&p * &q.diff(v));
        prop_assert!(close(&prod, &leibniz, 1e-12));
    }

    #[test]
    fn evaluation_is_multiplicative(p in poly_strategy(3, 3), q in poly_strategy(3, 3), pt in prop::collection::vec(-1.5f64..1.5, 3)) {
        let pq = (&p * &q).eval(&pt);
        let prod = p.eval(&pt) * q.eval(&pt);
        prop_assert!((pq - prod).abs() <= 1e-12 * (1.0 + prod.abs()));
    }

    #[test]
    fn text_round_trip(p in poly_strategy(3, 4)) {
        let back = Polynomial::parse(&p.to_string(), p.space()).unwrap();
        prop_assert!(close(&back, &p, 1e-15));
    }

    #[test]
    fn composition_commutes_with_evaluation(p in poly_strategy(2, 3), c in prop::collection::vec(-2.0f64..2.0, 4), pt in prop::collection::vec(-1.0f64..1.0, 2)) {
        let s = xs(2);
        let images = [
            Polynomial::parse(&format!("{} + {}*x1", c[0], c[1]), &s).unwrap(),
            Polynomial::parse(&format!("{} + {}*x2", c[2], c[3]), &s).unwrap(),
        ];
        let lhs = p.compose(&images).unwrap().eval(&pt);
        let inner = [images[0].eval(&pt), images[1].eval(&pt)];
        let rhs = p.eval(&inner);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }
}
