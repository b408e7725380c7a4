mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use napsh_core::complex::{eval_affine, AffineFunctional, ComponentId};
use napsh_core::envelope::{
    envelope, envelope_refinement, psh_check, split_edges, CurveRefinement, PshConstraintSystem, RefinementData,
};
use napsh_core::io::{model_from_graph, parse_model, save_model, to_json, GraphEdgeEntry, GraphFile, GraphVertexEntry, Q};
use napsh_core::numerical::{is_nef, ClosedForm};
use napsh_core::oracle::{generate_intersection_data, oracle_envelope, MetricGraphModel};
use napsh_core::pa::{directional_derivative, is_convex_on_faces, PAFunction};
use napsh_core::subdivision::{retract, Subdivision};
use napsh_core::support::{barycentric_refine, star_subdivision};
use napsh_core::valuation::{
    log_abs_dense, monomial_containment, valuation_dense, Monomial, VPolynomial, Valuation, VerticalIdeal,
};
use napsh_core::Rational;
use num_bigint::BigInt;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn b_vec(complex: &napsh_core::complex::DualComplex) -> Vec<Rational> {
    complex.multiplicities().iter().map(|m| Rational::from_integer(m.clone())).collect()
}

/// A random simplex and a refined star subdivision of it.
fn star_instance(r: &mut ChaCha8Rng) -> (Arc<Subdivision>, Arc<Subdivision>) {
    let dim = r.gen_range(1..=2);
    let complex = Arc::new(random_simplex(r, dim, 3, "p"));
    let root = Subdivision::trivial(complex.clone());
    let faces: Vec<_> = complex.faces().iter().filter(|f| f.len() >= 2).collect();
    let sigma: Vec<ComponentId> = faces.choose(r).expect("dim >= 1").iter().copied().collect();
    let axes: Vec<usize> = sigma.iter().map(|c| complex.index_of(*c).expect("member")).collect();
    let v = random_point_on(r, &complex, &axes);
    let eps = q(r.gen_range(1..=5), 6);
    let (sub, h) = star_subdivision(&root, &sigma, &v, &eps).expect("star");
    let (refined, _) = barycentric_refine(&sub, &h, &[], 8).expect("refine");
    (root, refined)
}

fn chain_or_cycle(r: &mut ChaCha8Rng) -> MetricGraphModel {
    random_graph(r, 4, "g")
}

fn random_monomial(r: &mut ChaCha8Rng, ids: &[ComponentId], max: u64) -> Monomial {
    ids.iter()
        .filter_map(|&id| {
            let e = r.gen_range(0..=max);
            (e > 0).then_some((id, e))
        })
        .collect()
}

fn times(a: &Monomial, b: &Monomial) -> Monomial {
    let mut m = a.clone();
    for (id, e) in b {
        *m.entry(*id).or_default() += e;
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn points_off_the_normalization_are_rejected(seed in any::<u64>(), num in 2i64..5, den in 1i64..5) {
        let mut r = rng(seed);
        let complex = random_complex(&mut r, 3, "n");
        let x = random_point(&mut r, &complex);
        prop_assert!(complex.check_dense(&x).is_ok());
        let total: Rational = x.iter().zip(b_vec(&complex)).map(|(s, b)| s * b).sum();
        prop_assert!(total.is_one());
        let scale = q(num, den);
        prop_assume!(!scale.is_one());
        let scaled: Vec<Rational> = x.iter().map(|s| s * &scale).collect();
        prop_assert!(complex.check_dense(&scaled).is_err());
        prop_assert!(complex.point(complex.sparse(&scaled).coords).is_err());
    }

    #[test]
    fn convex_functions_lie_below_vertex_interpolation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dim = r.gen_range(1..=3);
        let complex = Arc::new(random_simplex(&mut r, dim, 3, "i"));
        let phi = random_convex(&mut r, complex.clone(), "i/max");
        prop_assert!(is_convex_on_faces(&phi));
        let face = complex.maximal_faces()[0].clone();
        let vertex_values: Vec<Rational> =
            (0..complex.len()).map(|i| phi.eval_root(&complex.vertex(i)).unwrap()).collect();
        let top = vertex_values.iter().max().unwrap().clone();
        for _ in 0..8 {
            let x = random_point(&mut r, &complex);
            let value = phi.eval_root(&x).unwrap();
            prop_assert!(value <= phi.vertex_interpolation(&face, &x).unwrap());
            prop_assert!(value <= top);
        }
    }

    #[test]
    fn slopes_of_convex_functions_increase(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dim = r.gen_range(1..=3);
        let complex = Arc::new(random_simplex(&mut r, dim, 3, "d"));
        let phi = random_convex(&mut r, complex.clone(), "d/max");
        let v = random_point(&mut r, &complex);
        let w = random_point(&mut r, &complex);
        prop_assume!(v != w);
        let at = |t: &Rational| -> Vec<Rational> {
            v.iter().zip(&w).map(|(a, b)| (Rational::one() - t) * a + t * b).collect()
        };
        let rise = phi.eval_root(&w).unwrap() - phi.eval_root(&v).unwrap();
        prop_assert!(directional_derivative(&phi, &v, &w).unwrap() <= rise);
        let mut last: Option<Rational> = None;
        for k in 0..4 {
            let t = q(k, 4);
            let p = at(&t);
            let slope = directional_derivative(&phi, &p, &w).unwrap() / (Rational::one() - &t);
            if let Some(prev) = &last {
                prop_assert!(*prev <= slope);
            }
            last = Some(slope);
        }
    }

    #[test]
    fn retraction_is_idempotent_and_functorial(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (root, s1) = star_instance(&mut r);
        let complex = root.root().clone();
        let faces: Vec<_> = complex.faces().iter().filter(|f| f.len() >= 2).collect();
        let sigma: Vec<ComponentId> = faces.choose(&mut r).unwrap().iter().copied().collect();
        let axes: Vec<usize> = sigma.iter().map(|c| complex.index_of(*c).unwrap()).collect();
        let v = random_point_on(&mut r, &complex, &axes);
        let inner = sigma_on(&s1, &v);
        prop_assume!(inner.len() >= 2);
        let (star, h) = star_subdivision(&s1, &inner, &v, &q(1, 2)).unwrap();
        let (s2, _) = barycentric_refine(&star, &h, &[], 8).unwrap();
        let x = random_point(&mut r, &complex);
        let p2 = s2.from_root(&x).unwrap();
        prop_assert_eq!(retract(&s2, &p2, s2.id()).unwrap(), p2.clone());
        let direct = retract(&s2, &p2, root.id()).unwrap();
        let staged = retract(&s1, &retract(&s2, &p2, s1.id()).unwrap(), root.id()).unwrap();
        prop_assert_eq!(&direct, &staged);
        let coeffs: Vec<Rational> = (0..complex.len()).map(|_| small_rational(&mut r, 3)).collect();
        let d = AffineFunctional::new(complex.ids().iter().copied().zip(coeffs.iter().cloned()).collect());
        let pulled = PAFunction::from_functional(s2.clone(), &coeffs).unwrap();
        prop_assert_eq!(pulled.eval(&p2).unwrap(), eval_affine(&complex, &d, &direct).unwrap());
    }

    #[test]
    fn star_adds_one_vertex_per_star_vertex_and_tiles(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dim = r.gen_range(1..=3);
        let complex = Arc::new(random_simplex(&mut r, dim, 3, "s"));
        let root = Subdivision::trivial(complex.clone());
        let faces: Vec<_> = complex.faces().iter().filter(|f| f.len() >= 2).collect();
        let sigma: Vec<ComponentId> = faces.choose(&mut r).unwrap().iter().copied().collect();
        let axes: Vec<usize> = sigma.iter().map(|c| complex.index_of(*c).unwrap()).collect();
        let v = random_point_on(&mut r, &complex, &axes);
        let (sub, h) = star_subdivision(&root, &sigma, &v, &q(r.gen_range(1..=5), 6)).unwrap();
        let mut star_vertices: Vec<usize> = root
            .cells()
            .iter()
            .filter(|c| axes.iter().all(|a| c.vertices.contains(a)))
            .flat_map(|c| c.vertices.clone())
            .collect();
        star_vertices.sort_unstable();
        star_vertices.dedup();
        prop_assert_eq!(sub.vertices().len(), root.vertices().len() + star_vertices.len());
        for (old, new) in root.vertices().iter().zip(sub.vertices()) {
            prop_assert_eq!(old, new);
        }
        sub.check_tiling().unwrap();
        let (bary, _) = barycentric_refine(&sub, &h, &[], 8).unwrap();
        bary.check_tiling().unwrap();
        for face in complex.maximal_faces() {
            let cells: Vec<Vec<usize>> =
                bary.cells().iter().filter(|c| &c.root_face == face).map(|c| c.vertices.clone()).collect();
            prop_assert!(normalized_volume(&bary, &complex.axes(face), &cells).is_one());
        }
    }

    #[test]
    fn valuation_is_additive_on_products(seed in any::<u64>()) {
        let mut r = rng(seed);
        let complex = random_complex(&mut r, 2, "v");
        let x = random_point(&mut r, &complex);
        let poly = |r: &mut ChaCha8Rng| {
            let terms: BTreeMap<Monomial, BigInt> =
                (0..r.gen_range(1..=3)).map(|_| (random_monomial(r, complex.ids(), 3), BigInt::from(r.gen_range(1..=3)))).collect();
            VPolynomial::new(terms, None).unwrap()
        };
        let (f, g) = (poly(&mut r), poly(&mut r));
        let (Valuation::Finite(vf), Valuation::Finite(vg)) =
            (valuation_dense(&complex, &x, &f).unwrap(), valuation_dense(&complex, &x, &g).unwrap())
        else {
            panic!("nonzero polynomial with infinite valuation");
        };
        prop_assert_eq!(valuation_dense(&complex, &x, &f.mul(&g)).unwrap(), Valuation::Finite(&vf + &vg));
        if let Valuation::Finite(s) = valuation_dense(&complex, &x, &f.add(&g)).unwrap() {
            prop_assert!(s >= vf.clone().min(vg));
        }
    }

    #[test]
    fn contained_ideals_have_smaller_log_abs(seed in any::<u64>()) {
        let mut r = rng(seed);
        let complex = random_complex(&mut r, 2, "m");
        let ids = complex.ids().to_vec();
        let b_gens: Vec<Monomial> = (0..r.gen_range(1..=3)).map(|_| random_monomial(&mut r, &ids, 3)).collect();
        let a_gens: Vec<Monomial> = (0..r.gen_range(1..=3))
            .map(|_| times(b_gens.choose(&mut r).unwrap(), &random_monomial(&mut r, &ids, 2)))
            .collect();
        let twist = BigInt::from(r.gen_range(-1..=1));
        let ideal = |gens: &[Monomial]| {
            VerticalIdeal::new(gens.iter().cloned().map(VPolynomial::monomial).collect(), twist.clone()).unwrap()
        };
        let (a, b) = (ideal(&a_gens), ideal(&b_gens));
        prop_assert!(monomial_containment(&complex, &a, &b).unwrap());
        for _ in 0..5 {
            let x = random_point(&mut r, &complex);
            prop_assert!(log_abs_dense(&complex, &a, &x).unwrap() <= log_abs_dense(&complex, &b, &x).unwrap());
        }
    }

    #[test]
    fn nef_cone_is_closed_under_sums_and_scaling(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = chain_or_cycle(&mut r);
        let data = generate_intersection_data(&g).unwrap();
        let ids = data.ids().to_vec();
        let pick = |r: &mut ChaCha8Rng| -> (AffineFunctional, Vec<Rational>) {
            let d = AffineFunctional::new(ids.iter().map(|&i| (i, small_rational(r, 1))).collect());
            let theta = ids.iter().map(|_| nonneg_rational(r, 4)).collect();
            (d, theta)
        };
        let form = |t: &[Rational]| ClosedForm::from_vertex_pairings(&data, t).unwrap();
        let (d1, t1) = pick(&mut r);
        let (d2, t2) = pick(&mut r);
        let nef1 = is_nef(&d1, &form(&t1), &data).unwrap().nef;
        let nef2 = is_nef(&d2, &form(&t2), &data).unwrap().nef;
        let lambda = q(r.gen_range(1..=7), r.gen_range(1..=3));
        let scaled_d = AffineFunctional::new(d1.coefficients.iter().map(|(i, c)| (*i, c * &lambda)).collect());
        let scaled_t: Vec<Rational> = t1.iter().map(|t| t * &lambda).collect();
        prop_assert_eq!(is_nef(&scaled_d, &form(&scaled_t), &data).unwrap().nef, nef1);
        if nef1 && nef2 {
            let sum_d = AffineFunctional::new(ids.iter().map(|i| (*i, &d1.coefficients[i] + &d2.coefficients[i])).collect());
            let sum_t: Vec<Rational> = t1.iter().zip(&t2).map(|(a, b)| a + b).collect();
            prop_assert!(is_nef(&sum_d, &form(&sum_t), &data).unwrap().nef);
        }
    }

    #[test]
    fn adding_the_fiber_shifts_by_a_constant(seed in any::<u64>(), num in -6i64..6, den in 1i64..4) {
        let mut r = rng(seed);
        let g = chain_or_cycle(&mut r);
        let data = generate_intersection_data(&g).unwrap();
        let complex = g.complex().unwrap();
        let theta = g.closed_form(&data).unwrap();
        let t = q(num, den);
        let b = b_vec(&complex);
        let d = AffineFunctional::new(complex.ids().iter().map(|&i| (i, small_rational(&mut r, 2))).collect());
        let shifted = AffineFunctional::new(
            complex.ids().iter().zip(&b).map(|(i, bi)| (*i, &d.coefficients[i] + &t * bi)).collect(),
        );
        for _ in 0..4 {
            let x = complex.sparse(&random_point(&mut r, &complex));
            prop_assert_eq!(
                eval_affine(&complex, &shifted, &x).unwrap(),
                eval_affine(&complex, &d, &x).unwrap() + &t
            );
        }
        prop_assert_eq!(is_nef(&d, &theta, &data).unwrap().slacks, is_nef(&shifted, &theta, &data).unwrap().slacks);
    }

    #[test]
    fn envelopes_sit_below_the_obstacle_and_grow_under_refinement(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = chain_or_cycle(&mut r);
        prop_assume!(g.edges().len() > 0);
        let data = generate_intersection_data(&g).unwrap();
        let theta = g.closed_form(&data).unwrap();
        let complex = Arc::new(g.complex().unwrap());
        let root = Subdivision::trivial(complex.clone());
        let carrier = split_edges(&root, "g/mid").unwrap();
        let u = PAFunction::new(
            carrier.clone(),
            (0..carrier.vertices().len()).map(|_| small_rational(&mut r, 3)).collect(),
        )
        .unwrap();
        let sys = PshConstraintSystem::new(root, theta, data).unwrap();
        let vertices: Vec<Vec<Rational>> = carrier.vertices().iter().map(|v| v.coords.clone()).collect();
        let result = envelope(&sys, &u, &vertices).unwrap();
        for (x, res) in vertices.iter().zip(&result.results) {
            prop_assert!(res.value <= u.eval_root(x).unwrap());
            prop_assert!(psh_check(&res.coefficients, &sys).unwrap().nef);
            let phi = sys.pa_function(&res.coefficients).unwrap();
            for y in &vertices {
                prop_assert!(phi.eval_root(y).unwrap() <= u.eval_root(y).unwrap());
            }
        }
        let trace = envelope_refinement(&sys, &u, &vertices, 2, &CurveRefinement).unwrap();
        for w in trace.levels.windows(2) {
            for (a, b) in w[0].values.iter().zip(&w[1].values) {
                prop_assert!(a <= b);
            }
        }
    }

    #[test]
    fn oracle_optimizers_are_psh_on_their_nodes(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = chain_or_cycle(&mut r);
        prop_assume!(g.edges().len() > 0);
        let data = generate_intersection_data(&g).unwrap();
        let theta = g.closed_form(&data).unwrap();
        let complex = Arc::new(g.complex().unwrap());
        let root = Subdivision::trivial(complex.clone());
        let u = PAFunction::new(root.clone(), (0..complex.len()).map(|_| small_rational(&mut r, 3)).collect()).unwrap();
        let queries: Vec<Vec<Rational>> = (0..complex.len()).map(|i| complex.vertex(i)).collect();
        let out = oracle_envelope(&g, &u, &queries, 8).unwrap();
        let (target, values) = node_subdivision(&root, &out.nodes);
        let sys = PshConstraintSystem::new(root, theta, data).unwrap();
        let fine = CurveRefinement.refine(&sys, &target).unwrap();
        let phi = PAFunction::new(target.clone(), values).unwrap();
        let c = fine.coefficients_of(&phi).unwrap();
        let report = psh_check(&c, &fine).unwrap();
        prop_assert!(report.nef, "witness {:?}", report.witness);
        for v in target.vertices() {
            prop_assert!(phi.eval_root(&v.coords).unwrap() <= u.eval_root(&v.coords).unwrap());
        }
    }

    #[test]
    fn graph_models_round_trip_byte_for_byte(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 6, "rt");
        let file = GraphFile {
            schema_version: 1,
            id: g.id().to_string(),
            vertices: g
                .vertices()
                .iter()
                .map(|v| GraphVertexEntry { id: v.id, b: u64::try_from(&v.multiplicity).unwrap(), theta: Q(v.theta.clone()) })
                .collect(),
            edges: g
                .edges()
                .iter()
                .map(|e| GraphEdgeEntry { a: e.a, b: e.b, m: u64::try_from(&e.multiplicity).unwrap() })
                .collect(),
            subdivisions: Vec::new(),
            functions: Vec::new(),
        };
        let model = model_from_graph(&file).unwrap();
        let saved = save_model(&model);
        let text = to_json(&saved);
        let reloaded = parse_model(&text).unwrap();
        prop_assert_eq!(&save_model(&reloaded), &saved);
        prop_assert_eq!(to_json(&save_model(&reloaded)), text);
    }
}

/// `sigma` as ids of `sub`: the vertices of the smallest cell containing `v`.
fn sigma_on(sub: &Subdivision, v: &[Rational]) -> Vec<ComponentId> {
    let (k, lambda) = sub.locate(v).expect("point is covered");
    sub.cells()[k]
        .vertices
        .iter()
        .zip(&lambda)
        .filter(|(_, l)| !l.is_zero())
        .map(|(&i, _)| sub.vertices()[i].id)
        .collect()
}

/// The subdivision of a one-dimensional root whose vertices are the given nodes.
fn node_subdivision(root: &Arc<Subdivision>, nodes: &[(Vec<Rational>, Rational)]) -> (Arc<Subdivision>, Vec<Rational>) {
    let complex = root.root();
    let mut verts: Vec<(Option<ComponentId>, Vec<Rational>)> = Vec::new();
    let mut values = Vec::new();
    for v in root.vertices() {
        let (_, f) = nodes.iter().find(|(x, _)| *x == v.coords).expect("vertices are nodes");
        verts.push((Some(v.id), v.coords.clone()));
        values.push(f.clone());
    }
    let mut cells = Vec::new();
    for (k, cell) in root.cells().iter().enumerate() {
        if cell.vertices.len() != 2 {
            cells.push((cell.vertices.clone(), k));
            continue;
        }
        let (p, s) = (cell.vertices[0], cell.vertices[1]);
        let axes = complex.axes(&cell.root_face);
        let mut inner: Vec<&(Vec<Rational>, Rational)> = nodes
            .iter()
            .filter(|(x, _)| {
                x.iter().enumerate().all(|(i, c)| c.is_zero() || axes.contains(&i))
                    && axes.iter().all(|&a| !x[a].is_zero())
            })
            .collect();
        let far = axes.iter().copied().find(|&a| !root.vertices()[s].coords[a].is_zero()).expect("endpoint");
        inner.sort_by(|a, b| a.0[far].cmp(&b.0[far]));
        let mut prev = p;
        for (x, f) in inner {
            verts.push((None, x.clone()));
            values.push(f.clone());
            cells.push((vec![prev, verts.len() - 1], k));
            prev = verts.len() - 1;
        }
        cells.push((vec![prev, s], k));
    }
    let sub = Subdivision::new(format!("{}/nodes", root.id()), root, verts, cells).expect("node subdivision");
    (sub, values)
}
