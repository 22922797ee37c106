//! Built-in benchmark models: a 2-D double integrator, one- and two-zone
//! building temperature regulation, a 6-D drone under gusty disturbances,
//! and a 6-D orbital rendezvous problem. Each full model also has a
//! `-desk` variant with a coarser grid and smaller sample budget for quick
//! runs.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use super::sampler::NoiseModel;
use super::{ConfidenceSpec, HarnessError, HorizonSpec, ProblemSpec, SamplingPlan};
use crate::geometry::Partition;
use crate::linsys::{InputBox, LinearSystem};

pub const MODEL_NAMES: &[&str] = &[
    "dintegrator",
    "bas1",
    "bas1-desk",
    "bas2",
    "bas2-desk",
    "uav",
    "uav-desk",
    "satellite",
    "satellite-desk",
];

/// Construct a built-in model by name.
pub fn builtin_model(name: &str) -> Result<ProblemSpec, HarnessError> {
    match name {
        "dintegrator" => Ok(dintegrator()),
        "bas1" => Ok(bas1(false)),
        "bas1-desk" => Ok(bas1(true)),
        "bas2" => Ok(bas2(false)),
        "bas2-desk" => Ok(bas2(true)),
        "uav" => Ok(uav(false)),
        "uav-desk" => Ok(uav(true)),
        "satellite" => Ok(satellite(false)),
        "satellite-desk" => Ok(satellite(true)),
        other => Err(HarnessError::UnknownModel(other.to_string())),
    }
}

/// 2-D double integrator (position, velocity) with a scalar force input,
/// grouped over two steps to become fully actuated. Skewed triangular
/// noise per base step. The goal sits at high position, behind a critical
/// wall that is only safe to cross at positive velocity.
fn dintegrator() -> ProblemSpec {
    let system = LinearSystem::new(
        dmatrix![1.0, 1.0; 0.0, 1.0],
        dmatrix![0.5; 1.0],
        dvector![0.0, 0.0],
        InputBox::new(dvector![-4.0], dvector![4.0]).unwrap(),
    )
    .unwrap();
    let mut partition =
        Partition::new(dvector![-11.0, -5.5], dvector![2.0, 1.0], vec![11, 11]).unwrap();
    partition.add_goal_index_box(&[9, 0], &[10, 10]).unwrap();
    partition.add_critical_index_box(&[6, 0], &[6, 5]).unwrap();
    ProblemSpec {
        name: "dintegrator".into(),
        system,
        group: 2,
        partition,
        horizon: HorizonSpec::Steps(16),
        eta: 0.5,
        x0: dvector![-6.0, 0.0],
        confidence: ConfidenceSpec::Alpha(0.05),
        sampling: SamplingPlan {
            n0: 50,
            gamma: 2.0,
            n_max: 800,
        },
        noise: NoiseModel::Triangular {
            min: dvector![-0.75, -0.75],
            mode: dvector![0.25, -0.25],
            max: dvector![0.75, 0.75],
        },
        symmetric: true,
        rho: None,
    }
}

/// One-zone building temperature regulation: zone and radiator
/// temperature, air supply and boiler inputs, Gaussian noise. Grid of
/// 19 x 20 cells of width 0.2 over zone 19.1-22.9 and radiator 36-40,
/// goal zone temperature 20.9-21.1.
fn bas1(desk: bool) -> ProblemSpec {
    let system = LinearSystem::new(
        dmatrix![0.8820, 0.0058; 0.0134, 0.9625],
        dmatrix![0.0584, 0.0; 0.0, 0.0241],
        dvector![0.9604, 1.3269],
        InputBox::new(dvector![14.0, -10.0], dvector![28.0, 10.0]).unwrap(),
    )
    .unwrap();
    let mut partition =
        Partition::new(dvector![19.1, 36.0], dvector![0.2, 0.2], vec![19, 20]).unwrap();
    partition.add_goal_index_box(&[9, 0], &[9, 19]).unwrap();
    ProblemSpec {
        name: if desk { "bas1-desk" } else { "bas1" }.into(),
        system,
        group: 1,
        partition,
        horizon: HorizonSpec::Steps(if desk { 16 } else { 64 }),
        eta: 0.5,
        x0: dvector![20.0, 38.1],
        confidence: ConfidenceSpec::Beta(0.01),
        sampling: SamplingPlan {
            n0: if desk { 50 } else { 100 },
            gamma: 2.0,
            n_max: if desk { 800 } else { 12_800 },
        },
        noise: NoiseModel::Gaussian {
            mean: dvector![0.0, 0.0],
            cov: dmatrix![0.02, 0.0; 0.0, 0.1],
        },
        symmetric: true,
        rho: None,
    }
}

/// Two-zone building temperature regulation: zone and radiator
/// temperatures for two rooms, air supply and boiler inputs per room.
fn bas2(desk: bool) -> ProblemSpec {
    let a = dmatrix![
        0.8425, 0.0537, -0.0084, 0.0000;
        0.0515, 0.8435, 0.0000, -0.0064;
        0.0668, 0.0000, 0.8971, 0.0000;
        0.0000, 0.0668, 0.0000, 0.8971
    ];
    let b = dmatrix![
        0.0584, 0.0000, 0.0000, 0.0000;
        0.0000, 0.0599, 0.0000, 0.0000;
        0.0000, 0.0000, 0.0362, 0.0000;
        0.0000, 0.0000, 0.0000, 0.0362
    ];
    let q = dvector![1.2291, 1.0749, 0.0, 0.0];
    let system = LinearSystem::new(
        a,
        b,
        q,
        InputBox::new(
            dvector![14.0, 14.0, 65.0, 65.0],
            dvector![26.0, 26.0, 85.0, 85.0],
        )
        .unwrap(),
    )
    .unwrap();
    // zone grids cover 17.8-22.0 (full) resp. 17.8-22.2 (desk); the goal
    // band 19.8-20.2 in both zones stays cell-aligned in either case
    let (mut partition, goal_lo, goal_hi) = if desk {
        let p = Partition::new(
            dvector![17.8, 17.8, 36.0, 36.0],
            dvector![0.4, 0.4, 0.8, 0.8],
            vec![11, 11, 5, 5],
        )
        .unwrap();
        (p, [5usize, 5, 0, 0], [5usize, 5, 4, 4])
    } else {
        let p = Partition::new(
            dvector![17.8, 17.8, 36.2, 36.2],
            dvector![0.2, 0.2, 0.4, 0.4],
            vec![21, 21, 9, 9],
        )
        .unwrap();
        (p, [10usize, 10, 0, 0], [11usize, 11, 8, 8])
    };
    partition.add_goal_index_box(&goal_lo, &goal_hi).unwrap();
    ProblemSpec {
        name: if desk { "bas2-desk" } else { "bas2" }.into(),
        system,
        group: 1,
        partition,
        horizon: HorizonSpec::Steps(if desk { 16 } else { 32 }),
        eta: 0.5,
        x0: dvector![18.5, 18.5, 38.0, 38.0],
        confidence: ConfidenceSpec::Beta(0.01),
        sampling: SamplingPlan {
            n0: if desk { 50 } else { 100 },
            gamma: 2.0,
            n_max: if desk { 400 } else { 12_800 },
        },
        noise: NoiseModel::Gaussian {
            mean: DVector::zeros(4),
            cov: DMatrix::identity(4, 4) * 0.01,
        },
        symmetric: true,
        rho: None,
    }
}

/// Drone motion planning: three double integrators (x, y, z position and
/// velocity), grouped over two steps. The gust disturbance is a skewed
/// two-component Gaussian mixture standing in for a turbulence model.
///
/// The paper source for this benchmark prints the dynamics, the goal box,
/// and the partition size (25,515 regions) but not the per-dimension grid
/// or the obstacle layout; the grid here is a best reconstruction
/// (15 x 3 x 9 x 3 x 7 x 3 position/velocity cells) and the obstacles are
/// illustrative.
fn uav(desk: bool) -> ProblemSpec {
    let mut a = DMatrix::identity(6, 6);
    for i in [0, 2, 4] {
        a[(i, i + 1)] = 1.0;
    }
    let mut b = DMatrix::zeros(6, 3);
    for (axis, col) in [(0usize, 0usize), (2, 1), (4, 2)] {
        b[(axis, col)] = 0.5;
        b[(axis + 1, col)] = 1.0;
    }
    let system = LinearSystem::new(
        a,
        b,
        DVector::zeros(6),
        InputBox::new(DVector::from_element(3, -4.0), DVector::from_element(3, 4.0)).unwrap(),
    )
    .unwrap();

    let mut partition = if desk {
        Partition::new(
            dvector![-15.0, -3.0, -9.0, -3.0, -11.0, -3.0],
            dvector![4.0, 2.0, 4.0, 2.0, 4.0, 2.0],
            vec![7, 3, 5, 3, 5, 3],
        )
        .unwrap()
    } else {
        Partition::new(
            dvector![-15.0, -3.0, -9.0, -3.0, -9.0, -3.0],
            dvector![2.0, 2.0, 2.0, 2.0, 2.0, 2.0],
            vec![15, 3, 9, 3, 7, 3],
        )
        .unwrap()
    };
    if desk {
        // goal px [9,13], py [-1,3], pz [-7,-3]; one partial pillar
        partition
            .add_goal_index_box(&[6, 0, 2, 0, 1, 0], &[6, 2, 2, 2, 1, 2])
            .unwrap();
        partition
            .add_critical_index_box(&[3, 0, 0, 0, 0, 0], &[3, 2, 2, 2, 4, 2])
            .unwrap();
    } else {
        // goal 11 <= px <= 15, 1 <= py <= 5, -7 <= pz <= -3, any velocity
        partition
            .add_goal_index_box(&[13, 0, 5, 0, 1, 0], &[14, 2, 6, 2, 2, 2])
            .unwrap();
        // two pillars: px [-5,-1] x py [-3,3] and px [3,7] x py [-9,-1]
        partition
            .add_critical_index_box(&[5, 0, 3, 0, 0, 0], &[6, 2, 5, 2, 6, 2])
            .unwrap();
        partition
            .add_critical_index_box(&[9, 0, 0, 0, 0, 0], &[10, 2, 3, 2, 6, 2])
            .unwrap();
    }
    ProblemSpec {
        name: if desk { "uav-desk" } else { "uav" }.into(),
        system,
        group: 2,
        partition,
        horizon: HorizonSpec::Steps(if desk { 16 } else { 64 }),
        eta: 0.75,
        x0: dvector![-14.0, 0.0, 6.0, 0.0, -6.0, 0.0],
        confidence: ConfidenceSpec::Beta(0.01),
        sampling: SamplingPlan {
            n0: 25,
            gamma: 2.0,
            n_max: if desk { 400 } else { 12_800 },
        },
        noise: NoiseModel::GaussianMixture {
            weights: vec![0.85, 0.15],
            means: vec![
                DVector::zeros(6),
                dvector![0.35, 0.2, -0.35, -0.2, 0.25, 0.12],
            ],
            covs: vec![
                DMatrix::from_diagonal(&dvector![0.05, 0.02, 0.05, 0.02, 0.05, 0.02]),
                DMatrix::from_diagonal(&dvector![0.5, 0.25, 0.5, 0.25, 0.5, 0.25]),
            ],
        },
        symmetric: true,
        rho: None,
    }
}

/// Orbital rendezvous in the relative (Hill) frame: 6-D relative position
/// and velocity dynamics linearized about a circular orbit, discretized at
/// `tau` seconds with mean motion `n_orbit`, grouped over two steps.
///
/// The grid counts (11, 23, 5, 5, 5, 5) match the benchmark; the covered
/// ranges are a reconstruction since the source prints only the counts.
fn satellite(desk: bool) -> ProblemSpec {
    let n_orbit = 0.0011f64;
    let tau = 120.0f64;
    let nt = n_orbit * tau;
    let (s, c) = (nt.sin(), nt.cos());
    let n = n_orbit;
    let a = dmatrix![
        4.0 - 3.0 * c, 0.0, 0.0, s / n, 2.0 * (1.0 - c) / n, 0.0;
        6.0 * (s - nt), 1.0, 0.0, -2.0 * (1.0 - c) / n, 4.0 / n * s - 3.0 * n * tau, 0.0;
        0.0, 0.0, c, 0.0, 0.0, s / n;
        3.0 * n * s, 0.0, 0.0, c, 2.0 * s, 0.0;
        -6.0 * n * (1.0 - c), 0.0, 0.0, -2.0 * s, 4.0 * c - 3.0, 0.0;
        0.0, 0.0, -n * s, 0.0, 0.0, c
    ];
    let b = dmatrix![
        s / n, 2.0 * (1.0 - c) / n, 0.0;
        -2.0 * (1.0 - c) / n, (4.0 * s - 3.0 * n * tau) / n, 0.0;
        0.0, 0.0, s / n;
        c, 2.0 * s, 0.0;
        -2.0 * s, 4.0 * c - 3.0, 0.0;
        0.0, 0.0, c
    ];
    let system = LinearSystem::new(
        a,
        b,
        DVector::zeros(6),
        InputBox::new(DVector::from_element(3, -2.0), DVector::from_element(3, 2.0)).unwrap(),
    )
    .unwrap();

    let mut partition = if desk {
        Partition::new(
            dvector![-10.0, -10.0, -6.0, -0.6, -0.6, -0.6],
            dvector![4.0, 4.0, 4.0, 0.4, 0.4, 0.4],
            vec![5, 5, 3, 3, 3, 3],
        )
        .unwrap()
    } else {
        Partition::new(
            dvector![-11.0, -23.0, -5.0, -0.5, -0.5, -0.5],
            dvector![2.0, 2.0, 2.0, 0.2, 0.2, 0.2],
            vec![11, 23, 5, 5, 5, 5],
        )
        .unwrap()
    };
    if desk {
        partition
            .add_goal_index_box(&[2, 2, 1, 0, 0, 0], &[2, 2, 1, 2, 2, 2])
            .unwrap();
        // a stationary obstacle between the start and the target
        partition
            .add_critical_index_box(&[2, 3, 1, 0, 0, 0], &[2, 3, 1, 2, 2, 2])
            .unwrap();
    } else {
        partition
            .add_goal_index_box(&[5, 11, 2, 0, 0, 0], &[5, 11, 2, 4, 4, 4])
            .unwrap();
        partition
            .add_critical_index_box(&[5, 13, 2, 0, 0, 0], &[5, 14, 2, 4, 4, 4])
            .unwrap();
    }
    ProblemSpec {
        name: if desk { "satellite-desk" } else { "satellite" }.into(),
        system,
        group: 2,
        partition,
        horizon: HorizonSpec::Steps(16),
        eta: 0.5,
        x0: if desk {
            dvector![0.0, 8.0, 0.0, 0.0, 0.0, 0.0]
        } else {
            dvector![0.0, 16.0, 0.0, 0.0, 0.0, 0.0]
        },
        confidence: ConfidenceSpec::Alpha(0.05),
        sampling: SamplingPlan {
            n0: 100,
            gamma: 2.0,
            n_max: if desk { 800 } else { 20_000 },
        },
        noise: NoiseModel::Gaussian {
            mean: DVector::zeros(6),
            cov: DMatrix::from_diagonal(&dvector![0.1, 0.1, 0.01, 0.01, 0.01, 0.01]),
        },
        symmetric: true,
        rho: Some(100),
    }
}
