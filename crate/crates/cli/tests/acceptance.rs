//! Acceptance checks, one PASS/FAIL line each. Run with
//! `cargo test -p vd2nn-cli --test acceptance`; set `VD2NN_FULL=1` to train the
//! n=100, 5-layer networks instead of the n=64, 3-layer CI variant.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vd2nn::data::{load_idx, Channel, InputEncoding, LabeledImageSet, Resample};
use vd2nn::evaluation::{sweep, write_sweep_csv, SampleRecord, SweepAxis};
use vd2nn::heads::{
    argmax, class_scores, detect, differential_scores, power_efficiency, DetectorLayout, ElectronicHead, HeadMode,
};
use vd2nn::network::{
    DiffractiveLayer, DiffractiveNetwork, Displacement, DisplacementSample, NetworkGeometry, VaccinationSpec,
};
use vd2nn::optics::{
    adjoint_propagate, adjoint_shift, energy, make_transfer_function, propagate, relative_l2, shift, ComplexField,
    GridSpec,
};
use vd2nn::training::{loss_and_gradients, train, TrainConfig};
use vd2nn_cli::checkpoint::Checkpoint;
use vd2nn_cli::config::RunConfig;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, ok: bool, text: String) {
        if !ok {
            self.failures += 1;
        }
        println!("{} criterion {id}: {text}", if ok { "PASS" } else { "FAIL" });
    }
}

fn grid(n: usize) -> GridSpec {
    GridSpec::new(n, 0.53, 1.0).unwrap()
}

fn random_field(g: GridSpec, rng: &mut ChaCha8Rng) -> ComplexField {
    ComplexField::from_fn(g, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// Beam family per grid: width, centre and tilt ranges, lateral shift range and
/// propagation distances for which the field stays inside the window and its
/// spectrum stays clear of the sampling limit. `None` for grids too small to
/// hold such a field.
struct BeamFamily {
    sigma: f64,
    centre: f64,
    tilt: f64,
    shift: f64,
    distances: fn(&mut ChaCha8Rng) -> (f64, f64),
}

fn beam_family(n: usize) -> Option<BeamFamily> {
    match n {
        32 => Some(BeamFamily {
            sigma: 1.15,
            centre: 0.3,
            tilt: 0.02,
            shift: 0.3,
            distances: |r| (r.gen_range(0.5..2.0), r.gen_range(0.5..2.0)),
        }),
        64 => Some(BeamFamily {
            sigma: 1.4,
            centre: 1.5,
            tilt: 0.1,
            shift: 1.5,
            distances: |r| {
                if r.gen_bool(0.5) {
                    (10.0, 10.0)
                } else {
                    (r.gen_range(2.0..10.0), r.gen_range(2.0..10.0))
                }
            },
        }),
        _ => None,
    }
}

/// Random superposition of four tilted Gaussian beams.
fn beam_field(g: GridSpec, f: &BeamFamily, rng: &mut ChaCha8Rng) -> ComplexField {
    let beams: Vec<_> = (0..4)
        .map(|_| {
            (
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                rng.gen_range(-f.centre..=f.centre),
                rng.gen_range(-f.centre..=f.centre),
                rng.gen_range(-f.tilt..=f.tilt),
                rng.gen_range(-f.tilt..=f.tilt),
            )
        })
        .collect();
    let sigma = f.sigma;
    ComplexField::from_fn(g, |x, y| {
        let (px, py) = (g.coord(x), g.coord(y));
        beams
            .iter()
            .map(|&(amp, cx, cy, kx, ky)| {
                let r2 = (px - cx).powi(2) + (py - cy).powi(2);
                amp * (-r2 / (2.0 * sigma * sigma)).exp() * Complex64::from_polar(1.0, 2.0 * PI * (kx * px + ky * py))
            })
            .sum()
    })
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm())
}

fn criterion_1(r: &mut Report) {
    let t = Instant::now();
    let (mut adj, mut semi, mut shift_err, mut expand) = (0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    for n in [16, 32, 64] {
        let g = grid(n);
        for seed in 0..8u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * n as u64 + seed);
            let z = rng.gen_range(1.0..60.0);
            let h = make_transfer_function(&g, z);
            let (a, b) = (random_field(g, &mut rng), random_field(g, &mut rng));
            adj = adj.max(rel(
                a.inner(&propagate(&b, &h).unwrap()),
                adjoint_propagate(&a, &h).unwrap().inner(&b),
            ));
            let lim = g.max_shift() * 0.9;
            let (dx, dy) = (rng.gen_range(-lim..lim), rng.gen_range(-lim..lim));
            adj = adj.max(rel(
                a.inner(&shift(&b, dx, dy).unwrap()),
                adjoint_shift(&a, dx, dy).unwrap().inner(&b),
            ));
            for u in [&a, &b] {
                let e = energy(u);
                expand = expand.max((energy(&propagate(u, &h).unwrap()) - e) / e);
                expand = expand.max((energy(&shift(u, dx, dy).unwrap()) - e) / e);
            }

            let Some(family) = beam_family(n) else {
                // integer-pixel shifts of a centred field are exact at any size
                let c = ComplexField::from_fn(g, |x, y| {
                    if (4..n - 4).contains(&x) && (4..n - 4).contains(&y) {
                        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                let mut k = || rng.gen_range(-1i32..=1) as f64 * g.pitch;
                let (ax, ay, bx, by) = (k(), k(), k(), k());
                let ab = shift(&shift(&c, ax, ay).unwrap(), bx, by).unwrap();
                shift_err = shift_err.max(relative_l2(ab.values(), shift(&c, ax + bx, ay + by).unwrap().values()));
                let back = shift(&shift(&c, ax, ay).unwrap(), -ax, -ay).unwrap();
                shift_err = shift_err.max(relative_l2(back.values(), c.values()));
                continue;
            };
            let u = beam_field(g, &family, &mut rng);
            let (z1, z2) = (family.distances)(&mut rng);
            let two = propagate(
                &propagate(&u, &make_transfer_function(&g, z1)).unwrap(),
                &make_transfer_function(&g, z2),
            )
            .unwrap();
            let one = propagate(&u, &make_transfer_function(&g, z1 + z2)).unwrap();
            semi = semi.max(relative_l2(two.values(), one.values()));

            let s = family.shift;
            let (ax, ay, bx, by) = (
                rng.gen_range(-s..s),
                rng.gen_range(-s..s),
                rng.gen_range(-s..s),
                rng.gen_range(-s..s),
            );
            let ab = shift(&shift(&u, ax, ay).unwrap(), bx, by).unwrap();
            let direct = shift(&u, ax + bx, ay + by).unwrap();
            shift_err = shift_err.max(relative_l2(ab.values(), direct.values()));
            let back = shift(&shift(&u, ax, ay).unwrap(), -ax, -ay).unwrap();
            shift_err = shift_err.max(relative_l2(back.values(), u.values()));
            shift_err = shift_err.max((energy(&shift(&u, ax, ay).unwrap()) - energy(&u)).abs() / energy(&u));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = adj <= 1e-10 && semi <= 1e-6 && shift_err <= 1e-9 && expand <= 1e-12 && secs < 60.0;
    r.line(
        1,
        ok,
        format!(
            "operator suite n=16,32,64: adjoint {adj:.2e} (<=1e-10), semigroup {semi:.2e} (<=1e-6), \
             shift additivity/unitarity {shift_err:.2e} (<=1e-9), max energy gain {expand:.2e} (<=0), {secs:.1}s"
        ),
    );
    println!(
        "    n=16 composes integer-pixel shifts only; fractional identities run on compact beams at n=32 and n=64"
    );
}

/// First Rayleigh-Sommerfeld solution summed over source samples.
fn rayleigh_sommerfeld(src: &ComplexField, z: f64) -> ComplexField {
    let g = *src.grid();
    let k = 2.0 * PI / g.wavelength;
    ComplexField::from_fn(g, |x, y| {
        let mut acc = Complex64::new(0.0, 0.0);
        for sy in 0..g.n {
            for sx in 0..g.n {
                let u = src.at(sx, sy);
                if u.norm() == 0.0 {
                    continue;
                }
                let dx = g.coord(x) - g.coord(sx);
                let dy = g.coord(y) - g.coord(sy);
                let rr = (dx * dx + dy * dy + z * z).sqrt();
                let kernel = Complex64::new(1.0 / (2.0 * PI * rr), -1.0 / g.wavelength)
                    * (z / (rr * rr))
                    * Complex64::from_polar(1.0, k * rr);
                acc += u * kernel;
            }
        }
        acc * g.pitch * g.pitch
    })
}

fn central(f: &ComplexField, half: usize) -> Vec<Complex64> {
    let n = f.grid().n;
    let c = n / 2;
    let mut out = Vec::new();
    for y in c - half..c + half {
        for x in c - half..c + half {
            out.push(f.at(x, y));
        }
    }
    out
}

fn criterion_2(r: &mut Report) {
    let g = grid(8);
    let mut src = ComplexField::zeros(g);
    src.values_mut()[4 * 8 + 4] = Complex64::new(1.0, 0.0);
    let mut errs = Vec::new();
    for z in [10.0, 40.0] {
        let asm = propagate(&src, &make_transfer_function(&g, z)).unwrap();
        let rs = rayleigh_sommerfeld(&src, z);
        errs.push(relative_l2(&central(&asm, 2), &central(&rs, 2)));
    }
    let ok = errs.iter().all(|&e| e <= 0.02);
    r.line(
        2,
        ok,
        format!(
            "ASM vs Rayleigh-Sommerfeld, point source, n=8: central 4x4 error z=10: {:.3}, z=40: {:.3} (<=0.02)",
            errs[0], errs[1]
        ),
    );

    // the same comparison on a grid wide enough to hold the spectrum
    let g = grid(32);
    let src = ComplexField::from_fn(g, |x, y| {
        let r2 = g.coord(x).powi(2) + g.coord(y).powi(2);
        Complex64::new((-r2 / 2.0).exp(), 0.0)
    });
    let mut wide = Vec::new();
    for z in [10.0, 40.0] {
        let asm = propagate(&src, &make_transfer_function(&g, z)).unwrap();
        wide.push(relative_l2(
            &central(&asm, 2),
            &central(&rayleigh_sommerfeld(&src, z), 2),
        ));
    }
    println!(
        "    reference: n=32, 1-wavelength Gaussian source: z=10: {:.4}, z=40: {:.4}",
        wide[0], wide[1]
    );
}

fn small_network(layers: usize, mode: HeadMode, rng: &mut ChaCha8Rng) -> DiffractiveNetwork {
    let g = grid(16);
    let geometry = NetworkGeometry {
        grid: g,
        num_layers: layers,
        input_to_first: 6.0,
        layer_spacing: 6.0,
        last_to_output: 6.0,
    };
    let side = if mode == HeadMode::Differential { 1.0 } else { 1.6 };
    let layout = DetectorLayout::grid_layout(&g, mode, 2, side, 3.2, 2.4, 0.4).unwrap();
    let mut net = DiffractiveNetwork::new(geometry, 0.9, layout).unwrap();
    for l in &mut net.layers {
        l.phase.iter_mut().for_each(|p| *p = rng.gen_range(-PI..PI));
    }
    net
}

fn criterion_3(r: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = small_network(2, HeadMode::Standard, &mut rng);
    let g = *net.grid();
    let batch: Vec<_> = (0..2).map(|i| (random_field(g, &mut rng), i % 2)).collect();
    let cases = [
        DisplacementSample::zero(2),
        DisplacementSample {
            layers: vec![
                Displacement {
                    dx: 0.61,
                    dy: -0.35,
                    dz: 1.2,
                },
                Displacement {
                    dx: -0.44,
                    dy: 0.9,
                    dz: -0.7,
                },
            ],
        },
    ];
    let mut worst = [0.0f64; 2];
    let mut checked = 0;
    for (c, d) in cases.iter().enumerate() {
        let (_, grads) = loss_and_gradients(&net, &batch, d, 0.5).unwrap();
        for l in 0..2 {
            for _ in 0..24 {
                let p = rng.gen_range(0..g.n * g.n);
                let h = 1e-5;
                let mut plus = net.clone();
                plus.layers[l].phase[p] += h;
                let mut minus = net.clone();
                minus.layers[l].phase[p] -= h;
                let fd = (loss_and_gradients(&plus, &batch, d, 0.5).unwrap().0
                    - loss_and_gradients(&minus, &batch, d, 0.5).unwrap().0)
                    / (2.0 * h);
                let an = grads.phases[l][p];
                worst[c] = worst[c].max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
                checked += 1;
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    r.line(
        3,
        worst[0] <= 1e-5 && worst[1] <= 1e-5 && secs < 60.0,
        format!(
            "gradients vs central differences on 2-layer n=16 ({checked} checks): zero displacement {:.2e}, \
             displaced {:.2e} (<=1e-5), {secs:.1}s",
            worst[0], worst[1]
        ),
    );
}

fn mnist(file: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/mnist")
        .join(file)
        .display()
        .to_string()
}

struct DeskSetup {
    label: &'static str,
    geometry: NetworkGeometry,
    layout: DetectorLayout,
    encoding: InputEncoding,
    config: TrainConfig,
}

fn desk_setup() -> DeskSetup {
    let full = std::env::var("VD2NN_FULL").is_ok_and(|v| v == "1");
    let (n, layers, label) = if full {
        (100, 5, "n=100, 5 layers")
    } else {
        (64, 3, "n=64, 3 layers")
    };
    let g = grid(n);
    let spacing = 40.0;
    let geometry = NetworkGeometry {
        grid: g,
        num_layers: layers,
        input_to_first: spacing,
        layer_spacing: spacing,
        last_to_output: spacing,
    };
    let scale = g.aperture() / grid(64).aperture();
    let layout =
        DetectorLayout::grid_layout(&g, HeadMode::Standard, 10, 4.0 * scale, 10.0 * scale, 6.4 * scale, 1.0).unwrap();
    let encoding = InputEncoding {
        channel: Channel::Amplitude,
        object_span: 30.0 * scale,
        resample: Resample::Nearest,
    };
    let config = TrainConfig {
        batch_size: 32,
        epochs: 5,
        learning_rate: 0.03,
        loss_temperature: 0.1,
        seed: 2024,
        ..TrainConfig::default()
    };
    DeskSetup {
        label,
        geometry,
        layout,
        encoding,
        config,
    }
}

fn power_identity(records: &[SampleRecord]) -> f64 {
    records
        .iter()
        .map(|r| (r.power.detected_fraction + r.power.absorbed_fraction + r.power.scattered_fraction - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Trains both desk networks and returns the worst power-identity residual seen.
fn criteria_4_and_5(r: &mut Report) -> f64 {
    let t = Instant::now();
    let setup = desk_setup();
    let train_set = load_idx(mnist("train-images-idx3-ubyte.gz"), mnist("train-labels-idx1-ubyte.gz")).unwrap();
    let test = load_idx(mnist("t10k-images-idx3-ubyte.gz"), mnist("t10k-labels-idx1-ubyte.gz")).unwrap();
    let none = train_set.slice(0..0, "none");
    let trained = |vaccination: VaccinationSpec| {
        let mut net = DiffractiveNetwork::new(setup.geometry, 1.0, setup.layout.clone()).unwrap();
        let config = TrainConfig {
            vaccination,
            ..setup.config
        };
        train(&mut net, &train_set, &none, &setup.encoding, &config, |l| {
            println!(
                "    [{:?}] epoch {} loss {:.4}",
                vaccination.delta_lateral, l.epoch, l.mean_loss
            )
        })
        .unwrap();
        net
    };
    let plain = trained(VaccinationSpec::NONE);
    let vaccinated = trained(VaccinationSpec::lateral(2.12));

    let eval = |net: &DiffractiveNetwork, axis: SweepAxis, levels: &[f64], test: &LabeledImageSet| {
        sweep(net, test, &setup.encoding, axis, levels, 77, None).unwrap()
    };
    let p_lat = eval(&plain, SweepAxis::Lateral, &[0.0, 2.12], &test);
    let p_ax = eval(&plain, SweepAxis::Axial, &[2.4], &test);
    let v_lat = eval(&vaccinated, SweepAxis::Lateral, &[0.0, 2.12], &test);
    let secs = t.elapsed().as_secs_f64();

    let (p0, p2) = (p_lat.levels[0].accuracy * 100.0, p_lat.levels[1].accuracy * 100.0);
    let (v0, v2) = (v_lat.levels[0].accuracy * 100.0, v_lat.levels[1].accuracy * 100.0);
    let pz = p_ax.levels[0].accuracy * 100.0;
    let a = p0 >= 90.0;
    let b = v0 >= p0 - 4.0;
    let c = v2 >= p2 + 20.0;
    let d = p0 - p2 >= 25.0;
    let budget = if setup.label.starts_with("n=64") {
        1800.0
    } else {
        f64::INFINITY
    };
    r.line(
        4,
        a && b && c && d && secs < budget,
        format!(
            "vaccination effect ({}, {} test images, {:.0}s): clean {p0:.2}% (a: >=90 {}), vaccinated clean {v0:.2}% \
             (b: >={:.2} {}), at 2.12: vaccinated {v2:.2}% vs {p2:.2}% (c: +20 {}), drop {:.2} (d: >=25 {})",
            setup.label,
            test.len(),
            secs,
            if a { "ok" } else { "no" },
            p0 - 4.0,
            if b { "ok" } else { "no" },
            if c { "ok" } else { "no" },
            p0 - p2,
            if d { "ok" } else { "no" },
        ),
    );
    r.line(
        5,
        p0 - pz < p0 - p2,
        format!(
            "axial drop at 2.4 ({:.2} points) < lateral drop at 2.12 ({:.2} points)",
            p0 - pz,
            p0 - p2
        ),
    );
    [&p_lat, &p_ax, &v_lat]
        .iter()
        .flat_map(|s| s.records.iter().flatten())
        .fold(0.0, |m, rec| m.max(power_identity(std::slice::from_ref(rec))))
}

fn criterion_6(r: &mut Report) {
    let head = ElectronicHead::initial(10, 10);
    let params = head.param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bounded = true;
    for _ in 0..1000 {
        let i: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..1.0f64).powi(3) * 1e3).collect();
        bounded &= differential_scores(&i).iter().all(|s| (-1.0..=1.0).contains(s));
    }
    let mut invariant = true;
    for mode in [HeadMode::Standard, HeadMode::Differential, HeadMode::Hybrid] {
        let mut net = small_network(2, mode, &mut rng);
        if let Some(h) = &mut net.electronic {
            h.weights.iter_mut().for_each(|w| *w += rng.gen_range(-2.0..2.0));
        }
        let g = *net.grid();
        for _ in 0..10 {
            let u = random_field(g, &mut rng);
            let c = rng.gen_range(0.01..100.0);
            let d = DisplacementSample::zero(2);
            let pred = |f: &ComplexField| {
                let i = detect(&net.forward(f, &d).unwrap(), &net.layout).unwrap();
                argmax(&class_scores(&net.layout, net.electronic.as_ref(), &i).unwrap())
            };
            invariant &= pred(&u) == pred(&u.scaled(Complex64::new(c, 0.0)));
        }
    }
    r.line(
        6,
        params == 110 && bounded && invariant,
        format!(
            "heads: hybrid parameters {params} (==110), differential scores in [-1,1]: {bounded}, \
             predictions invariant to field scaling: {invariant}"
        ),
    );
}

fn criterion_7(r: &mut Report) {
    let m = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    let text = format!(
        "seed = 5\n[geometry]\nn = 32\nnum_layers = 2\ninput_to_first = 10.0\nlayer_spacing = 10.0\nlast_to_output = 10.0\n\
         [readout]\ndetector_side = 1.6\nrow_separation = 4.0\ncolumn_pitch = 3.0\n\
         [encoding]\nchannel = \"amplitude\"\nobject_span = 12.0\n\
         [training]\ndelta_lateral = 0.53\ndelta_axial = 1.0\nbatch_size = 25\nepochs = 2\nlearning_rate = 0.01\n\
         [data]\ntrain_images = \"{m}/train-images-idx3-ubyte.gz\"\ntrain_labels = \"{m}/train-labels-idx1-ubyte.gz\"\n\
         test_images = \"{m}/t10k-images-idx3-ubyte.gz\"\ntest_labels = \"{m}/t10k-labels-idx1-ubyte.gz\"\n\
         train_limit = 400\nvalidation_size = 100\ntest_limit = 100\n",
        m = m.display()
    );
    let config = RunConfig::parse(&text).unwrap();
    config.validate().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: usize, tag: &str| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let (tr, val) = config.load_training_data().unwrap();
            let mut net = config.network().unwrap();
            train(&mut net, &tr, &val, &config.encoding, &config.train_config(), |_| {}).unwrap();
            let test = config.load_test_data().unwrap();
            let s = sweep(
                &net,
                &test,
                &config.encoding,
                SweepAxis::Lateral,
                &[0.0, 1.06, 2.12],
                9,
                None,
            )
            .unwrap();
            let csv = dir.path().join(format!("{tag}.csv"));
            write_sweep_csv(&s, &csv).unwrap();
            let bytes = Checkpoint {
                config: config.clone(),
                network: net,
            }
            .to_bytes();
            let records = std::fs::read(vd2nn::evaluation::records_path(&csv)).unwrap();
            (bytes, std::fs::read(&csv).unwrap(), records)
        })
    };
    let a = run(1, "a");
    let b = run(3, "b");
    let c = run(1, "c");
    let same = a == b && a == c;
    r.line(
        7,
        same,
        format!(
            "reproducibility: checkpoint ({} bytes), sweep CSV and records identical across runs and thread counts 1/3: {same}",
            a.0.len()
        ),
    );
}

fn criterion_8(r: &mut Report, residual_from_sweeps: f64) {
    let geometry = NetworkGeometry::full_scale();
    let g = geometry.grid;
    let layout = DetectorLayout::default_layout(&g, HeadMode::Standard).unwrap();
    let uniform = ComplexField::from_fn(g, |_, _| Complex64::new(1.0, 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let phases: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..g.n * g.n).map(|_| rng.gen_range(-PI..PI) * 0.2).collect())
        .collect();

    // independent bookkeeping: walk the chain by hand and sum (1 - a^2) E at each layer
    let oracle_absorbed = |a: f64| {
        let mut field = propagate(&uniform, &make_transfer_function(&g, geometry.input_to_first)).unwrap();
        let mut absorbed = 0.0;
        for (l, p) in phases.iter().enumerate() {
            absorbed += (1.0 - a * a) * energy(&field);
            let t = field
                .values()
                .iter()
                .zip(p)
                .map(|(u, &ph)| u * Complex64::from_polar(a, ph))
                .collect();
            field = ComplexField::from_values(g, t).unwrap();
            let z = if l + 1 == 5 {
                geometry.last_to_output
            } else {
                geometry.layer_spacing
            };
            field = propagate(&field, &make_transfer_function(&g, z)).unwrap();
        }
        absorbed / energy(&uniform)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if oracle_absorbed(mid) > 0.88 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let floor = 0.5 * (lo + hi);
    let layers = phases
        .iter()
        .map(|p| DiffractiveLayer {
            phase: p.clone(),
            amplitude_floor: floor,
        })
        .collect();
    let net = DiffractiveNetwork::from_parts(geometry, layers, layout.clone(), None).unwrap();
    let trace = net.forward_trace(&uniform, &DisplacementSample::zero(5)).unwrap();
    let intensities = detect(&trace.output, &layout).unwrap();
    let report = power_efficiency(&trace.power, &intensities, &layout, 0);
    let sum = report.detected_fraction + report.absorbed_fraction + report.scattered_fraction;
    let residual = (sum - 1.0).abs().max(residual_from_sweeps);
    let ok = residual <= 1e-9 && (report.absorbed_fraction - 0.88).abs() <= 0.02;
    r.line(
        8,
        ok,
        format!(
            "power accounting: worst |detected+scattered+absorbed-1| {residual:.2e} (<=1e-9, includes every sweep \
             record above); amplitude floor {floor:.4} gives absorbed {:.4} (0.88 +- 0.02)",
            report.absorbed_fraction
        ),
    );
}

fn main() {
    // `cargo test` passes harness flags; a name filter that excludes us means skip
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    // VD2NN_CRITERIA=1,3 runs a subset
    let only: Option<Vec<u32>> = std::env::var("VD2NN_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|c| c.trim().parse().ok()).collect());
    let run = |c: u32| only.as_ref().map_or(true, |o| o.contains(&c));
    let mut report = Report { failures: 0 };
    if run(1) {
        criterion_1(&mut report);
    }
    if run(2) {
        criterion_2(&mut report);
    }
    if run(3) {
        criterion_3(&mut report);
    }
    let residual = if run(4) || run(5) {
        criteria_4_and_5(&mut report)
    } else {
        0.0
    };
    if run(6) {
        criterion_6(&mut report);
    }
    if run(7) {
        criterion_7(&mut report);
    }
    if run(8) {
        criterion_8(&mut report, residual);
    }
    println!("acceptance: {} criteria failed", report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}
