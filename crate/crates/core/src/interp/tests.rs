use super::*;
use crate::memory::MemoryBackend;
use crate::parser::{parse_expression, parse_model};

fn config(steps: u32) -> SimulationConfig {
    SimulationConfig {
        delta_time: 86400.0,
        steps,
        seed: 1,
        world_width: 3000.0,
        world_height: 3000.0,
        patch_size: 1000.0,
        populations: vec![],
    }
}

fn simulate(
    source: &str,
    config: SimulationConfig,
) -> (Result<RunSummary, SimulationError>, MemoryBackend) {
    let model = parse_model(source).unwrap();
    let mut sim = Simulation::new(&model, config, MemoryBackend::default()).unwrap();
    let outcome = sim.run();
    (outcome, sim.into_backend())
}

fn values(backend: &MemoryBackend, t: u32) -> Vec<f64> {
    backend.load_frame(t).unwrap().values.into_values().collect()
}

fn a(n: u32) -> Address {
    Address::new(n).unwrap()
}

/// An evaluator over a one-frame simulation of `source`.
fn with_evaluator<R>(
    source: &str,
    config: SimulationConfig,
    performer: Address,
    f: impl FnOnce(&mut Evaluator<'_>) -> R,
) -> R {
    let model = parse_model(source).unwrap();
    let mut sim = Simulation::new(&model, config, MemoryBackend::default()).unwrap();
    sim.initialize().unwrap();
    let base = performer;
    let stage = sim.memory.image.animat(base).map(|m| m.stage.clone());
    let def = match stage {
        Some(s) => model.stage(&s).unwrap(),
        None if model.patch().is_some() && sim.layout.cell_of(base).is_some() => model.patch().unwrap(),
        None => model.world().unwrap(),
    };
    let mut rng = sim.rng;
    let mut ev = Evaluator::new(
        &model,
        &sim.layout,
        &sim.memory.image,
        &mut rng,
        sim.config.delta_time,
        Some((def, base)),
        &[],
    );
    f(&mut ev)
}

const GRID: &str = "World with t [degreeC] = 20 [degreeC].\n\
                    Patch with grass [kg] = 1 [kg].\n\
                    Adult is G with age [day] reserve [g].";

#[test]
fn layout_and_addresses() {
    let mut c = config(1);
    c.populations = vec![(1, "Adult".to_string())];
    // World 1, patches 2..=10, Adult block at 11: x, y, age, reserve.
    with_evaluator(GRID, c, a(11), |ev| {
        let addr = |text: &str| match parse_expression(text).unwrap() {
            Expression::Attribute(v) => ev.address(&v).unwrap(),
            _ => unreachable!(),
        };
        assert_eq!(addr("my x"), a(11));
        assert_eq!(addr("my age"), a(13));
        assert_eq!(addr("my reserve"), a(14));
        assert_eq!(addr("world's t"), a(1));
        assert_eq!(ev.layout.patches.len(), 9);
        assert_eq!(ev.layout.patch(0, 0), a(2));
        assert_eq!(ev.layout.patch(1, 0), a(3));
        assert_eq!(ev.layout.patch(0, 1), a(5));
    });
}

#[test]
fn here_resolves_by_floor_division_and_clamps() {
    let model = parse_model(GRID).unwrap();
    let layout = Layout {
        world: Some(a(1)),
        patches: (2..=10).map(a).collect(),
        cols: 3,
        rows: 3,
        edge: 1000.0,
    };
    assert_eq!(layout.cell_at(1500.0, 0.0), (1, 0));
    assert_eq!(layout.cell_at(999.999, 2000.0), (0, 2));
    assert_eq!(layout.cell_at(-5.0, 7000.0), (0, 2));
    assert_eq!(layout.cell_at(3000.0, 3000.0), (2, 2));
    assert!(model.patch().is_some());
}

#[test]
fn literal_and_cast_values() {
    let mut c = config(1);
    c.populations = vec![(1, "Adult".to_string())];
    with_evaluator(GRID, c, a(11), |ev| {
        let mut eval = |text: &str| ev.eval(&parse_expression(text).unwrap());
        assert_eq!(eval("0.5 [km/day]").unwrap(), 500.0 / 86400.0);
        assert_eq!(eval("7200 [s] in [h]").unwrap(), 2.0);
        assert_eq!(eval("2 as [h]").unwrap(), 7200.0);
        assert_eq!(eval("delta time").unwrap(), 86400.0);
        assert_eq!(eval("world's t").unwrap(), 20.0);
        assert_eq!(eval("here's grass").unwrap(), 1.0);
        assert_eq!(eval("2 ^ 10").unwrap(), 1024.0);
        assert_eq!(eval("max(1 [m], 1 [km])").unwrap(), 1000.0);
        assert_eq!(eval("log(1000)").unwrap(), 3.0);
        assert_eq!(eval("floor(-2.5)").unwrap(), -3.0);
        assert_eq!(eval("ceiling(2.1)").unwrap(), 3.0);
        assert_eq!(eval("-abs(-4)").unwrap(), -4.0);
        assert!(eval("1 / (2 - 2)").unwrap_err().contains("division by zero"));
        assert!(eval("ln(0)").is_err());
        assert!(eval("log(-1)").is_err());
        assert!(eval("sqrt(-1)").is_err());
        assert!(eval("exp(1000)").unwrap_err().contains("non-finite"));
        assert!(eval("uniform 2 to 1").is_err());
        assert!(eval("gamma(-1, 1)").is_err());
    });
}

#[test]
fn direction_scan() {
    let src = "Patch with grass [kg] = 1 [kg].\nAdult is G with.";
    let mut c = config(1);
    c.populations = vec![(1, "Adult".to_string())];
    // 3x3 patches at 1..=9, the adult at 10.
    let model = parse_model(src).unwrap();
    let mut sim = Simulation::new(&model, c, MemoryBackend::default()).unwrap();
    sim.initialize().unwrap();
    let adult = model.stage("Adult").unwrap();
    let heading = |x: f64, y: f64, grass: &[(usize, usize, f64)]| {
        let mut image = sim.memory.image.clone();
        let mut frame = image.snapshot(sim.rng);
        frame.values.insert(a(10), x);
        frame.values.insert(a(11), y);
        for &(col, row, g) in grass {
            frame.values.insert(sim.layout.patch(col, row), g);
        }
        image.load(&frame, 1);
        let mut rng = sim.rng;
        let mut ev = Evaluator::new(&model, &sim.layout, &image, &mut rng, 1.0, Some((adult, a(10))), &[]);
        ev.eval(&parse_expression("direction neighbor's grass").unwrap()).unwrap()
    };
    // All equal: the first scanned patch, south-west of the center.
    let sw = heading(1500.0, 1500.0, &[]);
    assert_eq!(sw, (-1000.0f64).atan2(-1000.0));
    // A single richer east neighbor from the patch center.
    assert_eq!(heading(1500.0, 1500.0, &[(2, 1, 5.0)]), 0.0);
    // North.
    assert_eq!(
        heading(1500.0, 1500.0, &[(1, 2, 5.0)]),
        std::f64::consts::FRAC_PI_2
    );
    // Own patch richest: stay.
    assert_eq!(heading(1200.0, 1700.0, &[(1, 1, 5.0)]), 0.0);
    // Corner: only in-bounds cells; the first of them is the own patch.
    assert_eq!(heading(100.0, 100.0, &[]), 0.0);
    assert_eq!(heading(500.0, 500.0, &[(1, 1, 2.0)]), std::f64::consts::FRAC_PI_4);
}

#[test]
fn age_hand_trace() {
    let src = "Adult is G with age [day] = 0 [day].\n\
               to age is my delta age' = delta time.\n\
               Adult age.";
    let mut c = config(4);
    c.populations = vec![(1, "Adult".to_string())];
    let (outcome, backend) = simulate(src, c);
    outcome.unwrap();
    assert_eq!(backend.frame_count(), 5);
    for t in 1..=5u32 {
        let v = values(&backend, t);
        assert_eq!(v[2], f64::from(t - 1) * 86400.0);
    }
    assert_eq!(values(&backend, 4)[2], 259200.0);
}

#[test]
fn one_step_stores_two_frames() {
    let (outcome, backend) = simulate("World with t [s].\nto f is my t' = 1 [s].\nWorld f.", config(1));
    let summary = outcome.unwrap();
    assert_eq!(backend.frame_count(), 2);
    assert_eq!(summary.final_tick, 2);
    assert_eq!(values(&backend, 1), [0.0]);
    assert_eq!(values(&backend, 2), [1.0]);
}

#[test]
fn writes_are_synchronous() {
    // Both definitions read the old value.
    let src = "World with total [kg].\n\
               Patch with g [kg] = 1 [kg].\n\
               to grow is my g' = my g * 2 my delta g' = my g.\n\
               Patch grow.";
    let (outcome, backend) = simulate(src, config(3));
    outcome.unwrap();
    assert!(values(&backend, 2)[1..].iter().all(|&v| v == 3.0));
    assert!(values(&backend, 4)[1..].iter().all(|&v| v == 27.0));
}

#[test]
fn assignments_last_write_wins() {
    let src = "World with a [m].\nto f is my a' = 1 [m] my a' = 2 [m].\nWorld f.";
    let (outcome, backend) = simulate(src, config(1));
    outcome.unwrap();
    assert_eq!(values(&backend, 2), [2.0]);
}

#[test]
fn differential_equals_delta_times_step() {
    let base = "Adult is G with.\nAdult move where the speed -> uniform 0 [km/day] to 0.5 [km/day].\n";
    let d = format!("{base}to move is my d/dt x' = the speed.");
    let e = format!("{base}to move is my delta x' = (the speed) * delta time.");
    let mut c = config(10);
    c.populations = vec![(3, "Adult".to_string())];
    let (o1, b1) = simulate(&d, c.clone());
    let (o2, b2) = simulate(&e, c);
    o1.unwrap();
    o2.unwrap();
    assert_eq!(b1.frames(), b2.frames());
}

#[test]
fn utilities_are_memoized() {
    let src = "World with a [m] b [m] c [m].\n\
               to f is my a' = u * 1 [m] my b' = u * 1 [m] my c' = u * 1 [m] \
               where u = uniform 0 to 1.\n\
               World f.";
    let (outcome, backend) = simulate(src, config(5));
    outcome.unwrap();
    for t in 2..=6 {
        let f = backend.load_frame(t).unwrap();
        let prev = backend.load_frame(t - 1).unwrap();
        assert_eq!(f.rng.draws_since(prev.rng), 1);
        let v: Vec<f64> = f.values.into_values().collect();
        assert!(v[0] == v[1] && v[1] == v[2]);
    }
}

#[test]
fn hatching_happens_at_the_first_tick_the_guard_holds() {
    let src = "Egg is G with age [day] = 0 [day] mass [g] = 2 [g].\n\
               Adult is G with age [day] = 0 [day] wings [] = 2.\n\
               to age is my delta age' = delta time.\n\
               to hatch is my become Adult when my age >= 3 [day].\n\
               Egg age.\nEgg hatch.\nAdult age.";
    let mut c = config(6);
    c.populations = vec![(1, "Egg".to_string())];
    let (outcome, backend) = simulate(src, c);
    let summary = outcome.unwrap();
    let eggs: Vec<usize> = (1..=7).map(|t| summary.count(t, "Egg").unwrap()).collect();
    let adults: Vec<usize> = (1..=7).map(|t| summary.count(t, "Adult").unwrap()).collect();
    // Age reaches 3 days in frame 4; the guard holds while computing frame 5.
    assert_eq!(eggs, [1, 1, 1, 1, 0, 0, 0]);
    assert_eq!(adults, [0, 0, 0, 0, 1, 1, 1]);
    let egg = backend.load_frame(4).unwrap();
    let adult = backend.load_frame(5).unwrap();
    let (base, (stage, index)) = adult.animats.iter().next().unwrap();
    assert_eq!((stage.as_str(), *index), ("Adult", 1));
    // Position and age carry over (age includes the hatching tick's delta),
    // wings come from the initializer, mass is dropped.
    let v = |f: &crate::memory::TraceFrame, a: Address| f.values[&a];
    assert_eq!(v(&adult, *base), v(&egg, a(1)));
    assert_eq!(v(&adult, base.offset(1)), v(&egg, a(2)));
    assert_eq!(v(&adult, base.offset(2)), 4.0 * 86400.0);
    assert_eq!(v(&adult, base.offset(3)), 2.0);
    assert_eq!(adult.values.len(), 4);
}

#[test]
fn death_and_birth() {
    let src = "Adult is G with age [day] = 0 [day].\n\
               Egg is G with.\n\
               to age is my delta age' = delta time.\n\
               to lay is my spawn Egg' = 2.7.\n\
               to senesce is my die when my age >= 2 [day].\n\
               Adult age.\nAdult lay.\nAdult senesce.";
    let mut c = config(4);
    c.populations = vec![(2, "Adult".to_string())];
    let (outcome, backend) = simulate(src, c);
    let summary = outcome.unwrap();
    let adults: Vec<usize> = (1..=5).map(|t| summary.count(t, "Adult").unwrap()).collect();
    let eggs: Vec<usize> = (1..=5).map(|t| summary.count(t, "Egg").unwrap()).collect();
    assert_eq!(adults, [2, 2, 2, 0, 0]);
    // Two eggs per adult per tick, including the tick it dies.
    assert_eq!(eggs, [0, 4, 8, 12, 12]);
    // Eggs start at their parent's position.
    let f2 = backend.load_frame(2).unwrap();
    let parent = f2.values[&a(1)];
    let first_egg = f2.animats.iter().find(|(_, (s, _))| s == "Egg").unwrap().0;
    assert_eq!(f2.values[first_egg], parent);
    // Dead addresses are gone and never reused.
    let f4 = backend.load_frame(4).unwrap();
    assert!(!f4.values.contains_key(&a(1)));
    assert!(f4.animats.keys().all(|k| k.get() > 6));
}

#[test]
fn empty_populations_are_fine() {
    let src = "Adult is G with age [day].\nto age is my delta age' = delta time.\nAdult age.";
    let (outcome, backend) = simulate(src, config(3));
    assert_eq!(outcome.unwrap().final_tick, 4);
    assert_eq!(backend.frame_count(), 4);
}

#[test]
fn runtime_abort_keeps_completed_frames() {
    let src = "World with n [] = 2.\nto f is my n' = 1 / (my n - 1).\nWorld f.";
    let (outcome, backend) = simulate(src, config(10));
    // 2 -> 1 -> division by zero while computing frame 3.
    let Err(SimulationError::Runtime(e)) = outcome else {
        panic!("expected an abort");
    };
    assert_eq!(e.tick, 2);
    assert_eq!(backend.frame_count(), 2);
    assert!(e.to_string().contains("division by zero"), "{e}");
    assert_eq!((e.span.line, e.span.column), (2, 9));
}

#[test]
fn negative_spawn_count_aborts() {
    let src = "Adult is G with.\nto lay is my spawn Adult' = -1.\nAdult lay.";
    let mut c = config(2);
    c.populations = vec![(1, "Adult".to_string())];
    let (outcome, _) = simulate(src, c);
    assert!(matches!(outcome, Err(SimulationError::Runtime(_))));
}

#[test]
fn model_and_config_errors_are_reported_up_front() {
    let model = parse_model("World with a [m].\nto f is my a' = 1 [s].\nWorld f.").unwrap();
    assert!(matches!(
        Simulation::new(&model, config(1), MemoryBackend::default()),
        Err(SimulationError::Model(_))
    ));
    let model = parse_model("World with a [m].").unwrap();
    let mut c = config(1);
    c.populations = vec![(1, "Ghost".to_string())];
    assert!(matches!(
        Simulation::new(&model, c, MemoryBackend::default()),
        Err(SimulationError::Config(_))
    ));
}

#[test]
fn rewind_and_rerun() {
    let src = include_str!("../../fixtures/eggs_and_grasshoppers.rmd");
    let cfg = SimulationConfig::parse(include_str!("../../fixtures/eggs_and_grasshoppers.cfg")).unwrap();
    let model = parse_model(src).unwrap();
    let mut sim = Simulation::new(&model, cfg, MemoryBackend::default()).unwrap();
    sim.run_until(30).unwrap();
    let original = sim.backend().frames().to_vec();
    let summary = sim.summary().clone();
    for t in [1, 7, 30] {
        sim.rewind(t).unwrap();
        assert_eq!(sim.memory().image.snapshot(sim.rng()), original[t as usize - 1]);
        sim.run_until(30).unwrap();
        assert_eq!(sim.backend().frames(), &original[..]);
        assert_eq!(sim.summary(), &summary);
    }
}

#[test]
fn instantiation_substitutes_inside_utilities() {
    let model = parse_model(
        "Adult is G with.\n\
         to move is my d/dt x' = r where r = the speed.\n\
         Adult move where the speed -> 1 [m/s].",
    )
    .unwrap();
    let action = instantiate_task(&model, &model.tasks[0]).unwrap();
    assert!(action.placeholders().is_empty());
    assert_eq!(
        action.utilities[0].expression,
        parse_expression("1 [m/s]").unwrap()
    );
}
