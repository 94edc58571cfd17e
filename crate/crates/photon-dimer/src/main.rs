//! Batch front end: every subcommand turns a parameter file into the data
//! behind one figure or table, written as CSV/JSON plus a run manifest.

use clap::{Parser, Subcommand};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use photon_dimer::boundstate;
use photon_dimer::harness;
use photon_dimer::io::{self, RunManifest};
use photon_dimer::onephoton;
use photon_dimer::params::{angular_to_ghz, ghz_to_angular, ns_to_ps, ParamFile, SystemParams};
use photon_dimer::pulse::{self, PulseSpec};
use photon_dimer::spectroscopy::{self, PolarizationState, PolarizedCavityParams};
use photon_dimer::twophoton;

const EXIT_CONFIG: u8 = 3;
const EXIT_NUMERICS: u8 = 4;

#[derive(Parser)]
#[command(name = "photon-dimer", version, about = "Few-photon cavity-QED scattering engine")]
struct Cli {
    /// JSON parameter file (g_ghz, kappa_ghz, gamma_ghz, delta_c_ghz).
    #[arg(long, global = true, default_value = "configs/paper.json")]
    config: PathBuf,
    /// Output directory; files land in <out>/<command>/.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// RNG seed for sampling commands.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Lattice points per axis (power of two).
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    /// Worker thread cap (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// CW reflection spectra in both polarization configurations.
    Spectrum,
    /// Single-photon pulse scattering: G1 vs arrival time.
    Pulse1 {
        /// Pulse width as sigma * Gamma.
        #[arg(long, default_value_t = 2.2)]
        sigma_gamma: f64,
    },
    /// Two-photon scattering: G2 map and its equal-time diagonal.
    Pulse2 {
        #[arg(long, default_value_t = 2.2)]
        sigma_gamma: f64,
        /// Mean photon number of the coherent input.
        #[arg(long, default_value_t = 0.01)]
        n_bar: f64,
    },
    /// Peak delay and dispersion across laser detunings.
    Dispersion {
        #[arg(long, default_value_t = 2.2)]
        sigma_gamma: f64,
        /// Half-span of the detuning scan in GHz.
        #[arg(long, default_value_t = 15.0)]
        span_ghz: f64,
        #[arg(long, default_value_t = 61)]
        points: usize,
    },
    /// Photon-photon bound state table, eigenvalue and delays.
    Bound {
        #[arg(long, default_value_t = 2.2)]
        sigma_gamma: f64,
        #[arg(long, default_value_t = 121)]
        energies: usize,
    },
    /// Bound-subspace weight of the scattered pulse vs pulse width.
    Overlap {
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Classical one-sided-cavity Wigner delay vs detuning.
    CavityDelay {
        #[arg(long, default_value_t = 60.0)]
        span_ghz: f64,
        #[arg(long, default_value_t = 241)]
        points: usize,
    },
    /// Saturation of the peak delay with mean photon number.
    Saturation {
        /// Zero-power delay in ps.
        #[arg(long, default_value_t = 61.3)]
        d_tau_0: f64,
        /// High-power (classical) delay in ps.
        #[arg(long, default_value_t = 29.2)]
        d_tau_inf: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Pulse1 { .. } => "pulse1",
            Command::Pulse2 { .. } => "pulse2",
            Command::Dispersion { .. } => "dispersion",
            Command::Bound { .. } => "bound",
            Command::Overlap { .. } => "overlap",
            Command::CavityDelay { .. } => "cavity-delay",
            Command::Saturation { .. } => "saturation",
        }
    }

    fn default_grid_points(&self) -> usize {
        match self {
            Command::Pulse2 { .. } | Command::Bound { .. } => 256,
            _ => 4096,
        }
    }

    fn flags_json(&self) -> serde_json::Value {
        match self {
            Command::Spectrum => json!({}),
            Command::Pulse1 { sigma_gamma } => json!({ "sigma_gamma": sigma_gamma }),
            Command::Pulse2 { sigma_gamma, n_bar } => {
                json!({ "sigma_gamma": sigma_gamma, "n_bar": n_bar })
            }
            Command::Dispersion {
                sigma_gamma,
                span_ghz,
                points,
            } => json!({ "sigma_gamma": sigma_gamma, "span_ghz": span_ghz, "points": points }),
            Command::Bound {
                sigma_gamma,
                energies,
            } => json!({ "sigma_gamma": sigma_gamma, "energies": energies }),
            Command::Overlap { points } => json!({ "points": points }),
            Command::CavityDelay { span_ghz, points } => {
                json!({ "span_ghz": span_ghz, "points": points })
            }
            Command::Saturation {
                d_tau_0,
                d_tau_inf,
                points,
            } => json!({ "d_tau_0": d_tau_0, "d_tau_inf": d_tau_inf, "points": points }),
        }
    }
}

/// Anything that should abort the run, tagged with its exit code.
struct RunError {
    exit: u8,
    message: String,
}

impl RunError {
    fn config(message: impl Into<String>) -> Self {
        RunError {
            exit: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn numerics(message: impl Into<String>) -> Self {
        RunError {
            exit: EXIT_NUMERICS,
            message: message.into(),
        }
    }
}

macro_rules! numerics {
    ($expr:expr) => {
        $expr.map_err(|e| RunError::numerics(e.to_string()))?
    };
}

fn io_fail(e: io::IoError) -> RunError {
    RunError {
        exit: 1,
        message: e.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized; --threads ignored");
        }
    }
    let dir = cli.out.join(cli.command.name());
    match run(&cli, &dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            if e.exit == EXIT_NUMERICS {
                let _ = std::fs::create_dir_all(&dir);
                let _ = std::fs::write(
                    dir.join("diagnostic.txt"),
                    format!("command: {}\nerror: {}\n", cli.command.name(), e.message),
                );
                eprintln!("diagnostic written to {}", dir.join("diagnostic.txt").display());
            }
            ExitCode::from(e.exit)
        }
    }
}

fn load_config(path: &Path) -> Result<(ParamFile, SystemParams), RunError> {
    let file: ParamFile = io::read_json(path)
        .map_err(|e| RunError::config(format!("{}: {e}", path.display())))?;
    let params = file
        .to_params()
        .map_err(|e| RunError::config(format!("{}: {e}", path.display())))?;
    Ok((file, params))
}

fn run(cli: &Cli, dir: &Path) -> Result<(), RunError> {
    let (file, params) = load_config(&cli.config)?;
    let grid_points = cli.grid_points.unwrap_or(cli.command.default_grid_points());
    if !grid_points.is_power_of_two() || grid_points < 16 {
        return Err(RunError::config(format!(
            "--grid-points must be a power of two >= 16, got {grid_points}"
        )));
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| RunError::config(format!("{}: {e}", dir.display())))?;

    match &cli.command {
        Command::Spectrum => spectrum(dir, &params),
        Command::Pulse1 { sigma_gamma } => pulse1(dir, &params, *sigma_gamma, grid_points),
        Command::Pulse2 { sigma_gamma, n_bar } => {
            pulse2(dir, &params, *sigma_gamma, *n_bar, grid_points)
        }
        Command::Dispersion {
            sigma_gamma,
            span_ghz,
            points,
        } => dispersion(dir, &params, *sigma_gamma, *span_ghz, *points),
        Command::Bound {
            sigma_gamma,
            energies,
        } => bound(dir, &params, *sigma_gamma, *energies, grid_points),
        Command::Overlap { points } => overlap(dir, &params, *points),
        Command::CavityDelay { span_ghz, points } => {
            cavity_delay(dir, &params, *span_ghz, *points)
        }
        Command::Saturation {
            d_tau_0,
            d_tau_inf,
            points,
        } => saturation(dir, &params, *d_tau_0, *d_tau_inf, *points),
    }?;

    let manifest = RunManifest {
        command: cli.command.name().into(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        parameters: json!({
            "config": serde_json::to_value(&file).unwrap(),
            "flags": cli.command.flags_json(),
        }),
        seed: Some(cli.seed),
        grid_points,
        threads: cli.threads.unwrap_or_else(rayon::current_num_threads),
    };
    io::write_json(&dir.join("manifest.json"), &manifest).map_err(io_fail)
}

fn pulse_spec(params: &SystemParams, sigma_gamma: f64, n_bar: f64) -> PulseSpec {
    let scale = if params.g > 0.0 {
        params.gamma_purcell()
    } else {
        params.kappa
    };
    PulseSpec::new(sigma_gamma / scale, 0.0, n_bar)
}

fn spectrum(dir: &Path, params: &SystemParams) -> Result<(), RunError> {
    // the polarized model needs the V mode and the mode splitting, which
    // the core schema does not carry; use the measured-device values with
    // the H-mode quantities taken from the config
    let device = PolarizedCavityParams::device();
    let cav = PolarizedCavityParams::new(
        device.delta_h + params.delta_c,
        device.delta_v + params.delta_c,
        params.g,
        device.g_v,
        params.kappa,
        params.gamma,
    )
    .map_err(|e| RunError::config(e.to_string()))?;
    let detunings: Vec<f64> = (0..1201)
        .map(|i| ghz_to_angular(-60.0 + 0.1 * i as f64))
        .collect();
    let xs = spectroscopy::scan_detunings_ghz(&detunings);
    for (name, pol) in [
        ("cross_polarized", PolarizationState::cross_polarized()),
        ("co_polarized", PolarizationState::co_polarized_h()),
    ] {
        let scan = spectroscopy::reflection_scan(&detunings, &pol, &cav);
        let rows: Vec<Vec<f64>> = xs.iter().zip(&scan).map(|(&x, &y)| vec![x, y]).collect();
        io::write_csv(
            &dir.join(format!("{name}.csv")),
            "detuning_ghz,intensity",
            &rows,
        )
        .map_err(io_fail)?;
    }
    // line fit on the cross-polarized scan documents the extracted widths
    let scan = spectroscopy::reflection_scan(
        &detunings,
        &PolarizationState::cross_polarized(),
        &cav,
    );
    let (lo, hi) = numerics!(spectroscopy::fit_double_lorentzian(&xs, &scan));
    io::write_json(
        &dir.join("line_fit.json"),
        &json!({
            "low_line": { "center_ghz": lo.center, "fwhm_ghz": lo.fwhm, "amplitude": lo.amplitude },
            "high_line": { "center_ghz": hi.center, "fwhm_ghz": hi.fwhm, "amplitude": hi.amplitude },
            "residual": lo.residual,
        }),
    )
    .map_err(io_fail)
}

fn pulse1(
    dir: &Path,
    params: &SystemParams,
    sigma_gamma: f64,
    grid_points: usize,
) -> Result<(), RunError> {
    let spec = pulse_spec(params, sigma_gamma, 0.01);
    let scale = if params.g > 0.0 {
        params.gamma_purcell()
    } else {
        params.kappa
    };
    let grid = pulse::default_grid(&spec, scale, grid_points);
    let input = numerics!(pulse::make_gaussian(&spec, &grid));
    let output = numerics!(onephoton::scatter_single(&input, params));
    let delay = numerics!(pulse::peak_delay(&output, 0.0));
    io::write_waveform_csv(&dir.join("input.csv"), &input).map_err(io_fail)?;
    io::write_waveform_csv(&dir.join("g1.csv"), &output).map_err(io_fail)?;
    io::write_json(
        &dir.join("delay.json"),
        &json!({
            "sigma_gamma": sigma_gamma,
            "delay_ps": ns_to_ps(delay),
            "long_pulse_limit_ps": ns_to_ps(onephoton::delay_closed_form(0.0, params)),
        }),
    )
    .map_err(io_fail)
}

fn pulse2(
    dir: &Path,
    params: &SystemParams,
    sigma_gamma: f64,
    n_bar: f64,
    grid_points: usize,
) -> Result<(), RunError> {
    let spec = pulse_spec(params, sigma_gamma, n_bar);
    let obs = numerics!(harness::observables(&spec, params, grid_points));
    let psi2 = numerics!(twophoton::scatter_two(
        &spec,
        &obs.grid,
        params
    ));
    io::write_map_binary(&dir.join("g2_map.f64"), &psi2).map_err(io_fail)?;
    let diag = psi2.equal_time_diagonal();
    io::write_waveform_csv(&dir.join("g2_diagonal.csv"), &diag).map_err(io_fail)?;
    io::write_json(
        &dir.join("delays.json"),
        &json!({
            "sigma_gamma": sigma_gamma,
            "n_bar": n_bar,
            "delay1_ps": ns_to_ps(obs.delay1),
            "delay2_ps": ns_to_ps(obs.delay2),
            "cavity_delay_ps": ns_to_ps(4.0 / params.kappa),
            "warning": obs.warning,
        }),
    )
    .map_err(io_fail)
}

fn dispersion(
    dir: &Path,
    params: &SystemParams,
    sigma_gamma: f64,
    span_ghz: f64,
    points: usize,
) -> Result<(), RunError> {
    if points < 2 {
        return Err(RunError::config("need at least 2 scan points"));
    }
    let spec = pulse_spec(params, sigma_gamma, 0.01);
    let detunings: Vec<f64> = (0..points)
        .map(|i| ghz_to_angular(-span_ghz + 2.0 * span_ghz * i as f64 / (points - 1) as f64))
        .collect();
    let scan = numerics!(onephoton::dispersion_scan(&spec, params, &detunings));
    let rows: Vec<Vec<f64>> = scan
        .iter()
        .map(|pt| {
            let d = onephoton::phase_derivatives(pt.delta_l, params);
            vec![
                angular_to_ghz(pt.delta_l),
                ns_to_ps(pt.peak_delay),
                ns_to_ps(d.d1),
                d.d2,
                d.d3,
            ]
        })
        .collect();
    io::write_csv(
        &dir.join("scan.csv"),
        "delta_l_ghz,peak_delay_ps,group_delay_ps,d2_ns2,d3_ns3",
        &rows,
    )
    .map_err(io_fail)
}

fn bound(
    dir: &Path,
    params: &SystemParams,
    sigma_gamma: f64,
    energies: usize,
    grid_points: usize,
) -> Result<(), RunError> {
    if params.g == 0.0 {
        return Err(RunError::config(
            "bound states need a coupled emitter (g > 0)",
        ));
    }
    if energies < 2 {
        return Err(RunError::config("need at least 2 energies"));
    }
    let spec = pulse_spec(params, sigma_gamma, 0.01);
    let e_grid = boundstate::energy_grid(&spec, energies);
    let table = numerics!(boundstate::solve_bound_table(&e_grid, &spec, params));
    let rows: Vec<io::BoundRow> = table
        .iter()
        .flatten()
        .map(io::BoundRow::from)
        .collect();
    io::write_json(&dir.join("table.json"), &rows).map_err(io_fail)?;
    let derivs = numerics!(boundstate::phib_derivatives(0.0, params));
    let gp = params.gamma_purcell();
    let grid = pulse::default_grid(&spec, gp, grid_points);
    let projection = numerics!(boundstate::project_and_scatter(
        &spec, &grid, params, &e_grid
    ));
    io::write_json(
        &dir.join("delays.json"),
        &json!({
            "t_bound_resonant": io::ComplexPair::from(
                numerics!(boundstate::t_bound(e_grid[energies / 2], params))
            ),
            "delay2_ps": ns_to_ps(derivs.d1),
            "delay2_perturbative_ps": ns_to_ps(1.0 / gp + 3.0 / params.kappa),
            "distortion_ns3": derivs.d3,
            "bound_fraction": projection.bound_fraction,
        }),
    )
    .map_err(io_fail)
}

fn overlap(dir: &Path, params: &SystemParams, points: usize) -> Result<(), RunError> {
    if params.g == 0.0 {
        return Err(RunError::config(
            "bound states need a coupled emitter (g > 0)",
        ));
    }
    if points < 2 {
        return Err(RunError::config("need at least 2 pulse widths"));
    }
    let gp = params.gamma_purcell();
    let (lo, hi) = (0.2_f64, 30.0_f64);
    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let sg = lo * (hi / lo).powf(i as f64 / (points - 1) as f64);
        let spec = PulseSpec::new(sg / gp, 0.0, 0.01);
        let fraction = numerics!(boundstate::bound_fraction(&spec, params, 101));
        rows.push(vec![sg, fraction]);
    }
    io::write_csv(&dir.join("bound_fraction.csv"), "sigma_gamma,bound_fraction", &rows)
        .map_err(io_fail)
}

fn cavity_delay(
    dir: &Path,
    params: &SystemParams,
    span_ghz: f64,
    points: usize,
) -> Result<(), RunError> {
    if points < 2 {
        return Err(RunError::config("need at least 2 scan points"));
    }
    let rows: Vec<Vec<f64>> = (0..points)
        .map(|i| {
            let nu = -span_ghz + 2.0 * span_ghz * i as f64 / (points - 1) as f64;
            let delay = spectroscopy::cavity_wigner_delay(ghz_to_angular(nu), 0.0, params.kappa);
            vec![nu, delay]
        })
        .collect();
    io::write_csv(&dir.join("delay.csv"), "detuning_ghz,delay_ps", &rows).map_err(io_fail)
}

fn saturation(
    dir: &Path,
    params: &SystemParams,
    d_tau_0: f64,
    d_tau_inf: f64,
    points: usize,
) -> Result<(), RunError> {
    if points < 2 {
        return Err(RunError::config("need at least 2 scan points"));
    }
    let n_crit = match params.derive_rates() {
        Ok(d) => d.n_crit,
        Err(e) => return Err(RunError::config(e.to_string())),
    };
    let rows: Vec<Vec<f64>> = (0..points)
        .map(|i| {
            // log spacing over three decades around the critical number
            let n_bar = n_crit * 1e-2 * 1e4_f64.powf(i as f64 / (points - 1) as f64);
            let ratio = spectroscopy::saturation_delay(n_bar, n_crit, d_tau_0, d_tau_inf);
            vec![n_bar, ratio, ratio * d_tau_0]
        })
        .collect();
    io::write_csv(
        &dir.join("delay_vs_n.csv"),
        "n_bar,delay_ratio,delay_ps",
        &rows,
    )
    .map_err(io_fail)?;
    io::write_json(
        &dir.join("model.json"),
        &json!({
            "n_crit": n_crit,
            "d_tau_0_ps": d_tau_0,
            "d_tau_inf_ps": d_tau_inf,
        }),
    )
    .map_err(io_fail)
}
