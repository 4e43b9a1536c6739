use elastoscat::capacitance::CapacitanceMatrix;
use elastoscat::distribution::DensityFunction;
use elastoscat::experiments::*;
use elastoscat::{ElasticMedium, IncidentPlaneWave, Mat3, Vec3};

fn sphere_like() -> CapacitanceMatrix {
    CapacitanceMatrix::from_parts(Mat3::identity() * 8.0, 2.0 * std::f64::consts::PI, 1.0, 1.0, "model").unwrap()
}

fn medium() -> ElasticMedium {
    ElasticMedium::new(1.0, 1.0, 1.0).unwrap()
}

fn sweep(seed: u64) -> SweepSpec {
    SweepSpec {
        a_values: (7..=10).map(|e| 0.5f64.powi(e)).collect(),
        t: 1.0 / 3.0,
        k: DensityFunction::Constant { value: 1.0 },
        gamma: None,
        shape: "sphere".into(),
        capacitance: sphere_like(),
        medium: medium(),
        wave: IncidentPlaneWave::pressure(Vec3::z()).unwrap(),
        directions: vec![],
        seed,
        grid_n: 8,
        d_min: 0.45,
        c0: 1.0,
        require_precheck: false,
    }
}

#[test]
fn sweep_is_reproducible() {
    let a = convergence_sweep(&sweep(4)).unwrap();
    let b = convergence_sweep(&sweep(4)).unwrap();
    let ea: Vec<f64> = a.per_a.iter().map(|p| p.e).collect();
    let eb: Vec<f64> = b.per_a.iter().map(|p| p.e).collect();
    assert_eq!(ea, eb);
    assert_eq!(a.far_field_csv(), b.far_field_csv());
    assert_eq!(a.per_a.iter().map(|p| p.m).collect::<Vec<_>>(), vec![256, 512, 1024, 2048]);
    assert!(a.per_a.windows(2).all(|w| w[0].a > w[1].a));
}

#[test]
fn sweep_spec_round_trips_through_json() {
    let s = sweep(1);
    let text = serde_json::to_string(&s).unwrap();
    let back: SweepSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, s);
}

#[test]
fn forced_precheck_stops_the_sweep() {
    let mut s = sweep(0);
    s.require_precheck = true;
    let f = convergence_sweep(&s).unwrap_err();
    assert!(f.to_string().contains("precheck"), "{f}");
}

#[test]
fn t_near_one_half_warns() {
    let mut s = sweep(0);
    s.t = 0.45;
    let w = s.validate().unwrap();
    assert!(w.iter().any(|m| m.contains("close to 1/2")));
}

#[test]
fn negative_density_scenario() {
    let p = NegativeDensityParams {
        medium: medium(),
        wave: IncidentPlaneWave::pressure(Vec3::z()).unwrap(),
        rho: 1.0,
        k_plus_1: 2.0,
        c0: [[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]],
        grid_n: 6,
        directions: vec![],
    };
    match run_scenario(&Scenario::NegativeDensity(p)).unwrap() {
        ScenarioReport::NegativeDensity { eigenvalues, negative_definite, far_field_max, .. } => {
            assert!(negative_definite);
            assert_eq!(eigenvalues, [-5.0, -3.0, -1.0]);
            assert!(far_field_max > 0.0);
        }
        other => panic!("unexpected report {other:?}"),
    }
}

#[test]
fn exact_cloak_has_no_far_field() {
    let p = CloakParams {
        medium: medium(),
        wave: IncidentPlaneWave::shear(Vec3::x(), Vec3::y()).unwrap(),
        k: DensityFunction::Linear { base: 0.5, slope: [0.5, 0.0, 0.0] },
        capacitance: sphere_like(),
        grid_n: 8,
        a_values: vec![],
        t: 1.0 / 3.0,
        seed: 0,
        directions: vec![],
    };
    match run_scenario(&Scenario::Cloak(p)).unwrap() {
        ScenarioReport::Cloak { cloaked_far_field_max, background_far_field_max, discrete, .. } => {
            assert!(cloaked_far_field_max <= 1e-10 * background_far_field_max.max(1.0));
            assert!(background_far_field_max > 0.0);
            assert!(discrete.is_empty());
        }
        other => panic!("unexpected report {other:?}"),
    }
}
