//! Command implementations: each builds the requested domain, runs its
//! checks/measurements through the library, and returns a [`Report`].

use std::sync::Arc;

use anyhow::Context;
use num_complex::Complex64;
use num_rational::{BigRational, Rational64};
use num_traits::One;

use hodgelab::discrete_ops::{
    assemble_dirac, assemble_perturbed, eigenvalues_c, measured_sector_angle, BoundaryCondition,
    CoefficientField,
};
use hodgelab::exterior::Multivector;
use hodgelab::funcalc::{
    contour_vs_spectral_error, dofs_where, laplacian_contour_error, offdiag_profile,
    resolvent_norm, resolvent_sweep, ContourSpec, OffdiagFamily, PsiFunction, Subspace,
};
use hodgelab::geometry::{
    fd_exterior_derivative, glued_k_apply, glued_potential_apply, make_atlas, smooth_ball_domain,
    smoothing_map, AtlasParams, CutoffSpec, DomainAtlas, FormField, ImplicitDomain,
    QuadratureSpec,
};
use hodgelab::hodge::{
    discrete_potential, hodge_projectors, potential_contract_residual, potential_map_z,
    projector_pnorm,
};
use hodgelab::localization::{
    cz_decompose, maximal_function, whitney_cover, CzOperators, CzOptions,
};
use hodgelab::mesh::{Cochain, CubicalComplex, DEFAULT_CELL_CAP};
use hodgelab::polyform::{poincare_kb, poincare_rb, BumpSpec, PolyForm};

use crate::report::{Csv, Report};
use crate::CommonArgs;

fn parse_list(s: &Option<String>, default: &[f64]) -> anyhow::Result<Vec<f64>> {
    match s {
        None => Ok(default.to_vec()),
        Some(text) => text
            .split(',')
            .map(|tok| tok.trim().parse::<f64>().with_context(|| format!("bad number `{tok}`")))
            .collect(),
    }
}

fn parse_bc(s: &str) -> anyhow::Result<BoundaryCondition> {
    match s {
        "tangential" => Ok(BoundaryCondition::Tangential),
        "normal" => Ok(BoundaryCondition::Normal),
        other => anyhow::bail!("unknown boundary condition `{other}`"),
    }
}

fn build_domain(args: &CommonArgs) -> anyhow::Result<(Arc<DomainAtlas>, Arc<CubicalComplex>)> {
    let atlas = Arc::new(make_atlas(&args.domain, &AtlasParams::default())?);
    let shape = atlas.shape().clone();
    let complex = Arc::new(CubicalComplex::build(
        &|x| shape.contains(x),
        (&shape.bbox_lo, &shape.bbox_hi),
        args.h,
        DEFAULT_CELL_CAP,
        &args.domain,
    )?);
    Ok((atlas, complex))
}

fn manifest(args: &CommonArgs, extra: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "domain": args.domain,
        "h": args.h,
        "theta": args.theta,
        "bc": args.bc,
        "seed": args.seed,
        "tol": args.tol,
        "extra": extra,
    })
}

fn expected_betti(domain: &str) -> Option<Vec<usize>> {
    match domain {
        "square" | "disc" | "lshape" => Some(vec![1, 0, 0]),
        "annulus" => Some(vec![1, 1, 0]),
        "cube" | "twobrick" => Some(vec![1, 0, 0, 0]),
        _ => None,
    }
}

pub fn verify(args: &CommonArgs) -> anyhow::Result<Report> {
    let (atlas, complex) = build_domain(args)?;
    let mut rep = Report::new("verify", manifest(args, complex.summary_json()));
    let dim = complex.dim;

    // exact algebra spot checks (randomised, rational arithmetic)
    rep.check_true("exterior.duality_pairing_exact", exact_duality_sample(args.seed));
    rep.check_true("exterior.star_isometry_exact", exact_star_isometry(args.seed + 1));
    rep.check_true("polyform.homotopy_identity_exact", polyform_homotopy_sample(args.seed, 40));
    rep.check_true("polyform.true_potential_exact", polyform_true_potential(args.seed, 20));
    rep.check_true("polyform.star_relations_exact", polyform_star_relations(args.seed, 40));

    // mesh invariants
    for l in 0..dim.saturating_sub(1) {
        let d0 = complex.coboundary(l)?.to_dense();
        let d1 = complex.coboundary(l + 1)?.to_dense();
        let prod = &d1 * &d0;
        let mut max = 0.0f64;
        for i in 0..prod.nrows() {
            for j in 0..prod.ncols() {
                max = max.max(prod[(i, j)].abs());
            }
        }
        rep.check_le(&format!("mesh.d{}_d{}_is_zero", l + 1, l), max, 0.0);
    }
    if let Some(betti) = expected_betti(&args.domain) {
        let expected_chi: i64 = betti
            .iter()
            .enumerate()
            .map(|(g, b)| if g % 2 == 0 { *b as i64 } else { -(*b as i64) })
            .sum();
        rep.check_true(
            "mesh.euler_characteristic",
            complex.euler_characteristic() == expected_chi,
        );
    }

    // atlas invariants
    rep.check_true("geometry.partition_sums_to_one", partition_sum_ok(&atlas, args.seed));
    let mut max_rt = 0.0f64;
    for bc in atlas.ball_charts() {
        max_rt = max_rt.max(bc.round_trip_error(dim, 400, args.seed));
    }
    rep.check_le("geometry.chart_round_trip", max_rt, 1e-10);

    // operator invariants, both boundary conditions
    for bc in [BoundaryCondition::Tangential, BoundaryCondition::Normal] {
        let op = assemble_dirac(&complex, bc);
        let d = op.dense();
        let mut asym = 0.0f64;
        for i in 0..op.n() {
            for j in 0..op.n() {
                asym = asym.max((d[(i, j)] - d[(j, i)]).abs() * op.mass_weight);
            }
        }
        rep.check_le(&format!("dirac.{bc}.mass_self_adjointness"), asym, 1e-12);
        let dd = op.d_part.to_dense();
        let sq = &dd * &dd;
        let mut max = 0.0f64;
        for i in 0..op.n() {
            for j in 0..op.n() {
                max = max.max(sq[(i, j)].abs());
            }
        }
        rep.check_le(&format!("dirac.{bc}.d_squared"), max, 0.0);
    }

    let op = assemble_dirac(&complex, BoundaryCondition::Tangential);
    let (vals, _) = op.eigen().map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut sorted = vals.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = sorted.last().unwrap().abs().max(1.0);
    let mut pair_defect = 0.0f64;
    for i in 0..sorted.len() {
        pair_defect = pair_defect.max((sorted[i] + sorted[sorted.len() - 1 - i]).abs());
    }
    rep.check_le("dirac.spectrum_symmetry", pair_defect / scale, 1e-9);

    // Hodge decomposition
    let split = hodge_projectors(&op).map_err(|e| anyhow::anyhow!("{e}"))?;
    rep.check_le("hodge.completeness", split.completeness_defect(), 1e-10);
    rep.check_le("hodge.orthogonality_idempotence", split.orthogonality_defect(), 1e-10);
    if let Some(betti) = expected_betti(&args.domain) {
        rep.check_true("hodge.betti_numbers", split.harmonic_dims == betti);
    }
    let normal_split = hodge_projectors(&assemble_dirac(&complex, BoundaryCondition::Normal))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut reversed = split.harmonic_dims.clone();
    reversed.reverse();
    rep.check_true("hodge.bc_duality_of_harmonic_dims", reversed == normal_split.harmonic_dims);

    let pot = discrete_potential(&op).map_err(|e| anyhow::anyhow!("{e}"))?;
    rep.check_le(
        "hodge.potential_contract",
        potential_contract_residual(&op, &pot, 10, args.seed),
        1e-9,
    );
    let z = potential_map_z(&pot, &split);
    rep.check_le("hodge.z_right_inverse", z_residual(&op, &z, args.seed), 1e-9);
    let p2 = projector_pnorm(&split.p_d, 2.0, 8, args.seed).map_err(|e| anyhow::anyhow!("{e}"))?;
    rep.check_le("hodge.projector_norm_at_2", (p2.norm - 1.0).abs(), 1e-8);

    // resolvent bounds
    rep.check_le(
        "funcalc.imaginary_axis_contraction",
        resolvent_norm(&op, Complex64::new(0.0, 1.0)).map_err(|e| anyhow::anyhow!("{e}"))?,
        1.0 + 1e-10,
    );
    let mut sup = 0.0f64;
    for k in 0..50 {
        let ang = std::f64::consts::FRAC_PI_4 * (1.02 + 0.9 * (k as f64) / 50.0);
        let r = 10f64.powf(-2.0 + 4.0 * (k as f64) / 50.0);
        let z = Complex64::from_polar(r, ang);
        sup = sup.max(resolvent_norm(&op, z).map_err(|e| anyhow::anyhow!("{e}"))?);
    }
    rep.check_le("funcalc.sector_resolvent_bound", sup, std::f64::consts::SQRT_2 + 1e-8);

    // contour calculus
    let contour = ContourSpec::from_spectrum(vals, args.theta, 400)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let err = contour_vs_spectral_error(&op, &PsiFunction::z_over_1pz2(), &contour)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    rep.check_le("funcalc.contour_vs_oracle", err, 1e-6);

    // localisation
    let t = (4.0 * args.h).min(complex.diameter() / 2.0);
    let cover = whitney_cover(&complex, t).map_err(|e| anyhow::anyhow!("{e}"))?;
    rep.check_le(
        "localization.partition_of_squares",
        cover.partition_of_squares_defect(complex.total_cells()),
        1e-10,
    );
    rep.check_true(
        "localization.overlap_bound",
        cover.overlap <= 4usize.pow(dim as u32),
    );
    rep.check_le(
        "localization.cover_gradient_bound",
        cover.max_discrete_gradient(&complex) * t,
        1.0 + 1e-9,
    );

    let u = range_test_cochain(&op, &complex, args.seed);
    let (_, mx) = maximal_function(&u, 1.0).map_err(|e| anyhow::anyhow!("{e}"))?;
    rep.check_true("localization.maximal_finite", mx.iter().all(|v| v.is_finite()));
    let dec = cz_decompose(
        &op,
        &CzOperators::Dense { split: &split, potentials: &pot },
        &u,
        u.lp_norm(f64::INFINITY).unwrap() / 4.0,
        CzOptions::default(),
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    rep.check_le("localization.cz_reconstruction", dec.residual, 1e-9);
    rep.check_le("localization.cz_good_bound", dec.c_good, 2.0);

    // perturbed operator: coercive B keeps the spectrum in a double sector
    let field = CoefficientField::random_coercive(&op, 0.5, 1.0, args.seed);
    rep.check_true("perturbed.coercivity_spot_check", field.check_coercive(500, args.seed));
    let pert = assemble_perturbed(&complex, &field).map_err(|e| anyhow::anyhow!("{e}"))?;
    let eigs = eigenvalues_c(&pert).map_err(|e| anyhow::anyhow!("{e}"))?;
    let escale = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    rep.check_le(
        "perturbed.sector_angle",
        measured_sector_angle(&eigs, 1e-9 * escale),
        std::f64::consts::FRAC_PI_2 - 1e-3,
    );

    // exponents
    let t = hodgelab::exponents::exponents(Rational64::new(2, 1), 3)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    rep.check_true("exponents.p2_n3_lower_sobolev", t.lower_sobolev == Rational64::new(6, 5));

    Ok(rep)
}

fn exact_duality_sample(seed: u64) -> bool {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    for _ in 0..200 {
        let n = rng.gen_range(2..=5usize);
        let l = rng.gen_range(0..n);
        let a = random_exact_mv(&mut rng, n, Some(1));
        let u = random_exact_mv(&mut rng, n, Some(l));
        let v = random_exact_mv(&mut rng, n, Some(l + 1));
        let lhs = a.wedge(&u).unwrap().inner(&v).unwrap();
        let rhs = u.inner(&a.interior(&v).unwrap()).unwrap();
        if lhs != rhs {
            return false;
        }
    }
    true
}

fn exact_star_isometry(seed: u64) -> bool {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    for _ in 0..200 {
        let n = rng.gen_range(2..=5usize);
        let u = random_exact_mv(&mut rng, n, None);
        let v = random_exact_mv(&mut rng, n, None);
        if u.hodge_star().inner(&v.hodge_star()).unwrap() != u.inner(&v).unwrap() {
            return false;
        }
    }
    true
}

fn random_exact_mv(
    rng: &mut rand::rngs::StdRng,
    dim: usize,
    grade: Option<usize>,
) -> hodgelab::exterior::ExactMultivector {
    use rand::Rng;
    let mut mv = Multivector::zero(dim);
    for blade in 0..(1u32 << dim) {
        if let Some(g) = grade {
            if hodgelab::exterior::blade_grade(blade) != g {
                continue;
            }
        }
        if rng.gen_bool(0.5) {
            mv.add_term(
                blade,
                BigRational::new(rng.gen_range(-9i64..=9).into(), rng.gen_range(1i64..=5).into()),
            );
        }
    }
    mv
}

fn random_exact_polyform(
    rng: &mut rand::rngs::StdRng,
    dim: usize,
    max_degree: u32,
) -> PolyForm {
    use rand::Rng;
    let mut f = PolyForm::zero(dim);
    for _ in 0..rng.gen_range(1..=5) {
        let blade = rng.gen_range(0..(1u32 << dim));
        let mut alpha = vec![0u32; dim];
        let mut budget = max_degree;
        for a in alpha.iter_mut() {
            let v = rng.gen_range(0..=budget.min(3));
            *a = v;
            budget -= v;
        }
        f.add_term(
            blade,
            alpha,
            BigRational::new(rng.gen_range(-9i64..=9).into(), rng.gen_range(1i64..=4).into()),
        );
    }
    f
}

fn polyform_homotopy_sample(seed: u64, count: usize) -> bool {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    let theta = BumpSpec::default();
    for _ in 0..count {
        let n = rng.gen_range(2..=3usize);
        let f = random_exact_polyform(&mut rng, n, 5);
        let lhs = poincare_rb(&f.ext_d(), &theta)
            .unwrap()
            .add(&poincare_rb(&f, &theta).unwrap().ext_d());
        let rhs = f.sub(&poincare_kb(&f, &theta));
        if lhs != rhs {
            return false;
        }
    }
    true
}

fn polyform_true_potential(seed: u64, count: usize) -> bool {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    let theta = BumpSpec::default();
    for _ in 0..count {
        let n = rng.gen_range(2..=3usize);
        let f = random_exact_polyform(&mut rng, n, 5).ext_d();
        if poincare_rb(&f, &theta).unwrap().ext_d() != f {
            return false;
        }
    }
    true
}

fn polyform_star_relations(seed: u64, count: usize) -> bool {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    for _ in 0..count {
        let n = rng.gen_range(2..=4usize);
        let l = rng.gen_range(0..=n);
        let u = random_exact_polyform(&mut rng, n, 4).grade_part(l);
        let sign = |e: i64| {
            if e.rem_euclid(2) == 0 {
                BigRational::one()
            } else {
                -BigRational::one()
            }
        };
        if u.int_delta().hodge_star() != u.hodge_star().ext_d().scale(&sign(l as i64)) {
            return false;
        }
        if u.ext_d().hodge_star() != u.hodge_star().int_delta().scale(&sign(l as i64 - 1)) {
            return false;
        }
    }
    true
}

fn partition_sum_ok(atlas: &DomainAtlas, seed: u64) -> bool {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    let shape = atlas.shape();
    let mut tested = 0;
    while tested < 200 {
        let x: Vec<f64> = shape
            .bbox_lo
            .iter()
            .zip(&shape.bbox_hi)
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect();
        if !atlas.contains(&x) {
            continue;
        }
        tested += 1;
        let total: f64 = atlas.partition_values(&x).iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return false;
        }
    }
    true
}

fn z_residual(
    op: &hodgelab::discrete_ops::AssembledOperator,
    z: &faer::Mat<f64>,
    seed: u64,
) -> f64 {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    let n = op.n();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = op.apply(&w);
        let mut zv = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                zv[i] += z[(i, j)] * v[j];
            }
        }
        let dzv = op.apply(&zv);
        let err: f64 =
            dzv.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(err / hodgelab::linalg::norm2(&v).max(1e-300));
    }
    worst
}

fn range_test_cochain(
    op: &hodgelab::discrete_ops::AssembledOperator,
    complex: &Arc<CubicalComplex>,
    seed: u64,
) -> Cochain {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    let w: Vec<f64> = (0..op.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Cochain::from_values(complex.clone(), op.apply_d(&w))
}

pub fn potential(args: &CommonArgs) -> anyhow::Result<Report> {
    let (atlas, _complex) = build_domain(args)?;
    let mut rep = Report::new("potential", manifest(args, serde_json::json!({})));
    let theta = BumpSpec::default();

    rep.check_true("polyform.homotopy_identity_exact", polyform_homotopy_sample(args.seed, 60));
    rep.check_true("polyform.true_potential_exact", polyform_true_potential(args.seed, 30));

    // glued potential against the exact symbolic value on the disc
    let disc = Arc::new(make_atlas("disc", &AtlasParams::default())?);
    let p = PolyForm::constant(2, 0b01, BigRational::one());
    let exact = poincare_rb(&p, &theta).map_err(|e| anyhow::anyhow!("{e}"))?;
    let field = FormField::from_polyform(&p);
    let quad = QuadratureSpec::default_rule();
    let y = [0.3, 0.1];
    let got = glued_potential_apply(&disc, &field, &y, &quad, &theta)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let want = exact.eval_f64(&y);
    rep.check_le("glued.matches_exact_on_disc", (&got - &want).norm(), 1e-6);

    // glued homotopy defect on the requested domain at interior points
    if atlas.dim == 2 || atlas.dim == 3 {
        let g = test_polyform(atlas.dim);
        let u = FormField::from_polyform(&g);
        let du = FormField::from_polyform(&g.ext_d());
        let pts = interior_points(&atlas, 8, args.seed);
        let h_fd = 1e-4 * atlas.diameter();
        let mut rows = Vec::new();
        let mut worst = 0.0f64;
        for x in &pts {
            let atlas_arc = atlas.clone();
            let u2 = u.clone();
            let r_u = FormField::new(atlas.dim, move |p| {
                glued_potential_apply(&atlas_arc, &u2, p, &quad, &theta).expect("interior")
            });
            let d_ru = fd_exterior_derivative(&r_u, x, h_fd);
            let r_du = glued_potential_apply(&atlas, &du, x, &quad, &theta)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let k_u =
                glued_k_apply(&atlas, &u, x, &quad, &theta).map_err(|e| anyhow::anyhow!("{e}"))?;
            let lhs = &d_ru + &r_du;
            let rhs = &u.eval(x) - &k_u;
            let defect = (&lhs - &rhs).norm();
            worst = worst.max(defect);
            let mut row = x.clone();
            row.push(defect);
            rows.push(row);
        }
        rep.check_le("glued.homotopy_defect", worst, args.tol.unwrap_or(1e-3));
        let mut header: Vec<String> = (0..atlas.dim).map(|i| format!("x{}", i + 1)).collect();
        header.push("defect".into());
        rep.csvs.push(Csv { name: format!("potential-defect-{}", args.domain), header, rows });
    }
    Ok(rep)
}

fn test_polyform(dim: usize) -> PolyForm {
    // d(x₁x₂…) plus a constant 1-form: exercises several grades
    let mut g = PolyForm::coordinate(dim, 1).mul_scalar(&PolyForm::coordinate(dim, 2));
    if dim == 3 {
        g = g.mul_scalar(&PolyForm::coordinate(dim, 3));
    }
    g.ext_d().add(&PolyForm::constant(dim, 0b01, BigRational::one()))
}

fn interior_points(atlas: &DomainAtlas, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    let shape = atlas.shape();
    let margin = 0.05 * atlas.diameter();
    let mut pts = Vec::new();
    while pts.len() < count {
        let x: Vec<f64> = shape
            .bbox_lo
            .iter()
            .zip(&shape.bbox_hi)
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect();
        if !atlas.contains(&x) {
            continue;
        }
        // keep a margin so finite differences stay inside
        let mut ok = true;
        for i in 0..x.len() {
            for s in [-1.0, 1.0] {
                let mut y = x.clone();
                y[i] += s * margin;
                if !atlas.contains(&y) {
                    ok = false;
                }
            }
        }
        if ok {
            pts.push(x);
        }
    }
    pts
}

pub fn decompose(args: &CommonArgs) -> anyhow::Result<Report> {
    let (_atlas, complex) = build_domain(args)?;
    let bc = parse_bc(&args.bc)?;
    let op = assemble_dirac(&complex, bc);
    let split = hodge_projectors(&op).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut rep = Report::new(
        "decompose",
        manifest(
            args,
            serde_json::json!({
                "harmonic_dims": split.harmonic_dims,
                "ranks_d": split.ranks_d,
            }),
        ),
    );
    rep.check_le("hodge.completeness", split.completeness_defect(), 1e-10);
    rep.check_le("hodge.orthogonality_idempotence", split.orthogonality_defect(), 1e-10);
    if let Some(betti) = expected_betti(&args.domain) {
        rep.check_true("hodge.betti_numbers", split.harmonic_dims == betti);
    }
    let ps = parse_list(&args.p, &[1.5, 2.0, 4.0])?;
    let mut rows = Vec::new();
    for (pidx, proj) in [&split.p_d, &split.p_delta, &split.p_n].iter().enumerate() {
        for &p in &ps {
            let est =
                projector_pnorm(proj, p, 8, args.seed).map_err(|e| anyhow::anyhow!("{e}"))?;
            rows.push(vec![args.h, p, pidx as f64, est.norm, est.iterations as f64]);
        }
    }
    rep.csvs.push(Csv {
        name: format!("decompose-{}", args.domain),
        header: vec!["h".into(), "p".into(), "projector".into(), "norm_estimate".into(), "iterations".into()],
        rows,
    });
    // harmonic basis export
    let mut hrows = Vec::new();
    for j in 0..split.harmonic_basis.ncols() {
        for i in 0..op.n() {
            let v = split.harmonic_basis[(i, j)];
            if v != 0.0 {
                hrows.push(vec![j as f64, i as f64, op.dofs[i].0 as f64, v]);
            }
        }
    }
    rep.csvs.push(Csv {
        name: format!("harmonic-basis-{}", args.domain),
        header: vec!["basis_index".into(), "cell_id".into(), "grade".into(), "value".into()],
        rows: hrows,
    });
    Ok(rep)
}

pub fn sweep(args: &CommonArgs) -> anyhow::Result<Report> {
    let (_atlas, complex) = build_domain(args)?;
    let op = assemble_dirac(&complex, parse_bc(&args.bc)?);
    let split = hodge_projectors(&op).map_err(|e| anyhow::anyhow!("{e}"))?;
    let ps = parse_list(&args.p, &[1.4, 2.0, 3.9])?;
    let ts = parse_list(&args.t, &[0.01, 0.1, 1.0, 10.0])?;
    let mut rep = Report::new(
        "sweep",
        manifest(args, serde_json::json!({"p_grid": ps, "t_grid": ts})),
    );
    let ceiling = args.tol.unwrap_or(50.0);
    let mut rows = Vec::new();
    for (tag, sub) in
        [(0.0, Subspace::All), (1.0, Subspace::RangeD), (2.0, Subspace::RangeDelta)]
    {
        let table = resolvent_sweep(&op, Some(&split), &ts, &ps, sub, args.seed)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        for row in &table {
            rows.push(vec![tag, row.t, row.p, row.norm_est, row.iterations as f64]);
        }
        for &p in &ps {
            let sup = table
                .iter()
                .filter(|r| r.p == p)
                .map(|r| r.norm_est)
                .fold(0.0f64, f64::max);
            rep.check_le(&format!("sweep.sup_t.subspace{tag}.p{p}"), sup, ceiling);
        }
    }
    rep.csvs.push(Csv {
        name: format!("sweep-{}", args.domain),
        header: vec!["subspace".into(), "t".into(), "p".into(), "norm_estimate".into(), "iterations".into()],
        rows,
    });

    // off-diagonal decay profile at t = 4h along the first axis
    let h = args.h;
    let lo = complex.voxel_bounds().0[0] as f64 * h;
    let cut = lo + 0.25 * complex.diameter();
    let seps: Vec<f64> = (1..=4).map(|k| 2.0 * k as f64 * h).collect();
    let pairs: Vec<(Vec<usize>, Vec<usize>, f64)> = seps
        .iter()
        .map(|s| {
            (
                dofs_where(&op, |x| x[0] <= cut),
                dofs_where(&op, |x| x[0] >= cut + s),
                *s,
            )
        })
        .filter(|(e, f, _)| !e.is_empty() && !f.is_empty())
        .collect();
    if pairs.len() >= 3 {
        let prof = offdiag_profile(&op, 4.0 * h, &pairs, OffdiagFamily::Resolvent)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        rep.check_true("sweep.offdiag_rate_positive", prof.rate > 0.0);
        rep.csvs.push(Csv {
            name: format!("offdiag-{}", args.domain),
            header: vec!["dist".into(), "norm".into()],
            rows: prof.rows.iter().map(|r| vec![r.dist, r.norm]).collect(),
        });
    }
    Ok(rep)
}

pub fn funcalc(args: &CommonArgs) -> anyhow::Result<Report> {
    let (_atlas, complex) = build_domain(args)?;
    let op = assemble_dirac(&complex, parse_bc(&args.bc)?);
    let (vals, _) = op.eigen().map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut rep = Report::new("funcalc", manifest(args, serde_json::json!({})));
    let base = ContourSpec::from_spectrum(vals, args.theta, 400)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let corpus = [
        PsiFunction::z_over_1pz2(),
        PsiFunction::z2_over_1pz2_sq(),
        PsiFunction::z3_over_1pz2_sq(),
    ];
    let mut rows = Vec::new();
    for (fi, f) in corpus.iter().enumerate() {
        let mut errs = Vec::new();
        for nodes in [100usize, 200, 400] {
            let e = contour_vs_spectral_error(&op, f, &base.with_nodes(nodes))
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            rows.push(vec![fi as f64, nodes as f64, e]);
            errs.push(e);
        }
        rep.check_le(&format!("funcalc.error_at_400.{}", f.label), errs[2], 1e-6);
        rep.check_le(
            &format!("funcalc.halving_100_200.{}", f.label),
            errs[1],
            (errs[0] / 2.0).max(1e-8),
        );
        rep.check_le(
            &format!("funcalc.halving_200_400.{}", f.label),
            errs[2],
            (errs[1] / 2.0).max(1e-8),
        );
    }
    // sectorial calculus on D²
    let mus: Vec<f64> = vals.iter().map(|v| v * v).collect();
    let fs = PsiFunction::new("l/(1+l)^2", 1.0, |z| {
        let w = Complex64::new(1.0, 0.0) + z;
        z / (w * w)
    });
    let cs = ContourSpec::from_sectorial_spectrum(&mus, 1.0, 400)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let laperr = laplacian_contour_error(&op, &fs, &cs).map_err(|e| anyhow::anyhow!("{e}"))?;
    rep.check_le("funcalc.laplacian_error_at_400", laperr, 1e-6);
    rep.csvs.push(Csv {
        name: format!("funcalc-{}", args.domain),
        header: vec!["function".into(), "nodes_per_ray".into(), "relative_error".into()],
        rows,
    });
    Ok(rep)
}

pub fn czdemo(args: &CommonArgs) -> anyhow::Result<Report> {
    let (_atlas, complex) = build_domain(args)?;
    let op = assemble_dirac(&complex, BoundaryCondition::Tangential);
    let split = hodge_projectors(&op).map_err(|e| anyhow::anyhow!("{e}"))?;
    let pot = discrete_potential(&op).map_err(|e| anyhow::anyhow!("{e}"))?;
    let tools = CzOperators::Dense { split: &split, potentials: &pot };
    let u = range_test_cochain(&op, &complex, args.seed);
    let sup = u.lp_norm(f64::INFINITY).unwrap();
    let mut rep = Report::new("czdemo", manifest(args, serde_json::json!({})));
    let mut rows = Vec::new();
    let mut last_json = serde_json::json!({});
    for k in 0..6 {
        let alpha = sup * 0.5f64.powi(k);
        let dec = cz_decompose(&op, &tools, &u, alpha, CzOptions::default())
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        rep.check_le(&format!("cz.reconstruction.alpha{k}"), dec.residual, 1e-9);
        rep.check_le(&format!("cz.good_bound.alpha{k}"), dec.c_good, 2.0);
        rows.push(vec![
            alpha,
            dec.cubes.len() as f64,
            dec.total_cube_measure,
            dec.residual,
            dec.c_good,
        ]);
        last_json = dec.report_json(complex.dim);
    }
    rep.csvs.push(Csv {
        name: format!("czdemo-{}", args.domain),
        header: vec![
            "alpha".into(),
            "num_cubes".into(),
            "total_cube_measure".into(),
            "residual".into(),
            "c_good".into(),
        ],
        rows,
    });
    rep.extra_json.push((format!("czdemo-cubes-{}", args.domain), last_json));
    Ok(rep)
}

pub fn geometry(args: &CommonArgs) -> anyhow::Result<Report> {
    let (atlas, _complex) = build_domain(args)?;
    let mut rep = Report::new("geometry", manifest(args, atlas.metadata_json()));
    // smoothing map on a kinked graph
    let cutoff = CutoffSpec::new(0.5, 2.0).map_err(|e| anyhow::anyhow!("{e}"))?;
    let map = smoothing_map(|xp: &[f64]| 0.5 * xp[0].abs(), 2, 0.2, cutoff, 2.0)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(args.seed);
    let mut worst_rt = 0.0f64;
    let mut bracket_ok = true;
    for _ in 0..1000 {
        let x = [rng.gen_range(-1.5..1.5), rng.gen_range(-2.5..2.5)];
        let d = map.profile_derivative(&x[..1], x[1]);
        bracket_ok &= (0.5 - 1e-9..=1.5 + 1e-9).contains(&d);
        let y = map.forward(&x);
        let back = map.inverse(&y).map_err(|e| anyhow::anyhow!("{e}"))?;
        worst_rt =
            worst_rt.max(((back[0] - x[0]).powi(2) + (back[1] - x[1]).powi(2)).sqrt());
    }
    rep.check_true("smoothing.derivative_bracket", bracket_ok);
    rep.check_le("smoothing.round_trip", worst_rt, 1e-10);

    // intermediate smooth domain between B(x0,r)∩Ω′ and B(x0,2r)∩Ω′
    let omega = ImplicitDomain::ball(vec![0.0, 0.0], 1.0);
    let q = smooth_ball_domain(vec![1.0, 0.0], 0.3, omega.clone())
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut containment_ok = true;
    for _ in 0..10_000 {
        let x = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        let in_omega = omega.contains(&x);
        let d0 = ((x[0] - 1.0).powi(2) + x[1].powi(2)).sqrt();
        if in_omega && d0 < 0.3 && !q.contains(&x) {
            containment_ok = false;
        }
        if !in_omega && q.contains(&x) {
            containment_ok = false;
        }
        if in_omega && d0 >= 0.6 && q.contains(&x) {
            containment_ok = false;
        }
    }
    rep.check_true("smooth_ball.containments", containment_ok);
    Ok(rep)
}

pub fn exponents(p_str: &str, n: u32) -> i32 {
    let p = match parse_rational(p_str) {
        Some(p) => p,
        None => {
            eprintln!("cannot parse exponent `{p_str}`");
            return 2;
        }
    };
    match hodgelab::exponents::exponents(p, n) {
        Ok(t) => {
            let out = serde_json::json!({
                "p": t.p.to_string(),
                "n": t.n,
                "conjugate": t.conjugate.to_string(),
                "lower_sobolev": t.lower_sobolev.to_string(),
                "trace": t.trace.to_string(),
                "sobolev": t.sobolev.to_string(),
            });
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn parse_rational(s: &str) -> Option<Rational64> {
    if let Some((num, den)) = s.split_once('/') {
        let n: i64 = num.trim().parse().ok()?;
        let d: i64 = den.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        Some(Rational64::new(n, d))
    } else {
        let n: i64 = s.trim().parse().ok()?;
        Some(Rational64::new(n, 1))
    }
}

