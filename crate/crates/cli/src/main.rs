use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use stochgame::automaton::stationary_profile;
use stochgame::game::{game_to_json, load_game, profile_from_doc, profile_to_doc, ProfileDoc};
use stochgame::modified::{modified_payoff, ModifiedSpec, Partition};
use stochgame::occupancy::{
    block_breakdown, discounted_payoff, n_stage_payoff, occupation_stationary,
};
use stochgame::simulate::{coin_run_oracle, mc_discounted_payoff, segment_runs, simulate};
use stochgame::structure::classify;
use stochgame::uniform::{uniform_pipeline, verify_uniform_eq, PipelineOptions, VerifyOptions};
use stochgame::values::{
    default_grid, discounted_maxmin, discounted_minmax, modified_best_response,
    modified_maxmin_stat, stationary_equilibrium, trace_equilibria, uniform_minmax_all,
    uniform_value, SearchOptions, StatOptions, ValueKind,
};
use stochgame::{fixtures, Error, StationaryProfile, StochasticGame};

#[derive(Parser)]
#[command(
    name = "stochgame",
    version,
    about = "Discounted stochastic games and their modified games"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Clone)]
struct Common {
    /// Write the result here instead of stdout; the run manifest goes next
    /// to it as `<out>.manifest.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Accepted for compatibility; all work runs on one thread.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a game file against every structural rule.
    Validate {
        #[arg(long)]
        game: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Occupation measure and payoffs of a stationary profile.
    Eval {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        s0: String,
        #[arg(long)]
        lambda: f64,
        /// Profile file; uniform play when omitted.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Also report the average payoff over this many stages.
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Modified payoffs and per-block breakdown of a stationary profile.
    ModifiedEval {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        s0: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Best response in the modified game against a profile.
    BestResponse {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Player id or 1-based number.
        #[arg(long)]
        player: String,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        s0: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Stationary equilibrium of the modified game, or a trace over a grid.
    Equilibrium {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        s0: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Comma-separated, strictly increasing.
        #[arg(long)]
        lambda_grid: Option<String>,
        /// Gap tolerance relative to the payoff bound.
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Discounted or extrapolated uniform min-max / max-min values.
    Values {
        #[arg(long)]
        game: PathBuf,
        #[arg(long, default_value = "minmax")]
        kind: String,
        #[arg(long)]
        player: String,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        lambda_grid: Option<String>,
        /// Extrapolate to λ → 1 over the grid.
        #[arg(long)]
        extrapolate: bool,
        /// Also compute the stationary-restricted value of the modified game
        /// under this spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Partition states by uniform min-max values and tag every block.
    Classify {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        lambda_grid: Option<String>,
        /// Grouping tolerance relative to the payoff bound.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize a uniform ε-equilibrium candidate and probe it.
    UniformEq {
        #[arg(long)]
        game: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long)]
        lambda_grid: Option<String>,
        /// Check only this initial state.
        #[arg(long)]
        s0: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate plays of a stationary profile.
    Simulate {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        s0: String,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        /// Partition file (list of lists of state ids) for run segmentation.
        #[arg(long)]
        partition: Option<PathBuf>,
        /// Monte Carlo estimate of the discounted payoff over this many plays.
        #[arg(long)]
        plays: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Empirical mean of the initial run of heads of a biased coin.
    Coin {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Recompute a worked example and check its pinned numbers.
    Reproduce {
        #[arg(value_parser = ["example1", "example2", "bigmatch"])]
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

/// A finished command: its output and whether its own check passed.
struct Done {
    text: String,
    ok: bool,
    inputs: Vec<PathBuf>,
}

impl Done {
    fn ok(text: String, inputs: Vec<PathBuf>) -> Self {
        Self {
            text,
            ok: true,
            inputs,
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn parse_grid(s: Option<&str>) -> anyhow::Result<Vec<f64>> {
    match s {
        None => Ok(default_grid()),
        Some(s) => s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad λ `{x}`"))
            })
            .collect(),
    }
}

/// A player id, or a 1-based position when no id matches.
fn player_arg(game: &StochasticGame, s: &str) -> anyhow::Result<usize> {
    if let Ok(i) = game.player_index(s) {
        return Ok(i);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 && k <= game.num_players() => Ok(k - 1),
        _ => Err(Error::UnknownPlayer(s.to_string()).into()),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io {
            path: path.display().to_string(),
            source: e,
        }
        .into()
    })
}

fn load_profile(
    game: &StochasticGame,
    path: Option<&PathBuf>,
) -> anyhow::Result<StationaryProfile> {
    match path {
        None => Ok(StationaryProfile::uniform(game)),
        Some(p) => {
            let doc: ProfileDoc = serde_json::from_str(&read(p)?).map_err(|e| Error::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
            Ok(profile_from_doc(game, &doc)?)
        }
    }
}

fn load_spec(
    game: &StochasticGame,
    path: &Path,
    s0: Option<&String>,
    lambda: Option<f64>,
) -> anyhow::Result<ModifiedSpec> {
    let mut spec = ModifiedSpec::from_json(game, &read(path)?)?;
    if let Some(s) = s0 {
        spec = spec.with_s0(game.state_index(s)?);
    }
    if let Some(l) = lambda {
        spec = spec.with_lambda(l);
    }
    spec.check(game)?;
    Ok(spec)
}

fn named_values(game: &StochasticGame, v: &[f64]) -> Value {
    Value::Object(
        game.state_names()
            .iter()
            .cloned()
            .zip(v.iter().map(|x| json!(x)))
            .collect(),
    )
}

fn sha256_file(path: &Path) -> String {
    match fs::read(path) {
        Ok(bytes) => hex::encode(Sha256::digest(&bytes)),
        Err(_) => "unreadable".into(),
    }
}

fn manifest(
    command: &str,
    args: &[String],
    common: &Common,
    inputs: &[PathBuf],
    outputs: Vec<Value>,
) -> Value {
    json!({
        "command": command,
        "args": args,
        "inputs": inputs.iter().map(|p| json!({"path": p.display().to_string(), "sha256": sha256_file(p)}))
            .collect::<Vec<_>>(),
        "seed": common.seed,
        "jobs": common.jobs,
        "versions": {"stochgame": env!("CARGO_PKG_VERSION")},
        "outputs": outputs,
    })
}

fn cmd_validate(path: &Path) -> anyhow::Result<Done> {
    let text = read(path)?;
    match stochgame::game::parse_game(&text) {
        Ok(g) => Ok(Done::ok(
            pretty(&json!({"valid": true, "players": g.num_players(), "states": g.num_states()})),
            vec![path.into()],
        )),
        Err(Error::Validation(v)) => {
            let list: Vec<Value> = v
                .iter()
                .map(|x| json!({"rule": x.rule.as_str(), "state": x.state, "profile": x.profile, "detail": x.detail}))
                .collect();
            println!(
                "{}",
                pretty(&json!({"valid": false, "violations": list})).trim_end()
            );
            Err(Error::Validation(v).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_eval(
    game_path: &Path,
    s0: &str,
    lambda: f64,
    profile: Option<&PathBuf>,
    horizon: Option<usize>,
    format: Format,
) -> anyhow::Result<Done> {
    let game = load_game(game_path)?;
    let s = game.state_index(s0)?;
    let x = load_profile(&game, profile)?;
    let occ = occupation_stationary(&game, s, lambda, &x)?;
    let mut inputs = vec![game_path.to_path_buf()];
    inputs.extend(profile.cloned());
    if format == Format::Csv {
        return Ok(Done::ok(occ.to_csv(&game), inputs));
    }
    let mut out = json!({
        "s0": s0,
        "lambda": lambda,
        "payoff": discounted_payoff(&game, &occ),
        "occupation": occ.to_json(&game),
    });
    if let Some(n) = horizon {
        out["n_stage"] = json!({"horizon": n, "payoff": n_stage_payoff(&game, s, &x, n)?});
    }
    Ok(Done::ok(pretty(&out), inputs))
}

fn cmd_modified_eval(
    game_path: &Path,
    spec_path: &Path,
    profile: Option<&PathBuf>,
    s0: Option<&String>,
    lambda: Option<f64>,
) -> anyhow::Result<Done> {
    let game = load_game(game_path)?;
    let spec = load_spec(&game, spec_path, s0, lambda)?;
    let x = load_profile(&game, profile)?;
    let mut players = Vec::new();
    for i in 0..game.num_players() {
        let l = spec.lambda_for(i);
        let occ = occupation_stationary(&game, spec.s0, l, &x)?;
        let part = &spec.per_player[i].partition;
        let bd = block_breakdown(&game, &occ, part)?;
        players.push(json!({
            "player": game.players()[i],
            "lambda": l,
            "payoff": discounted_payoff(&game, &occ)[i],
            "modified_payoff": modified_payoff(&game, &spec, &occ, i)?,
            "blocks": bd.to_json(&game, part),
        }));
    }
    let mut inputs = vec![game_path.to_path_buf(), spec_path.to_path_buf()];
    inputs.extend(profile.cloned());
    Ok(Done::ok(
        pretty(&json!({"s0": game.state_name(spec.s0), "players": players})),
        inputs,
    ))
}

#[allow(clippy::too_many_arguments)]
fn cmd_best_response(
    game_path: &Path,
    spec_path: &Path,
    player: &str,
    profile: Option<&PathBuf>,
    s0: Option<&String>,
    lambda: Option<f64>,
) -> anyhow::Result<Done> {
    let game = load_game(game_path)?;
    let spec = load_spec(&game, spec_path, s0, lambda)?;
    let i = player_arg(&game, player)?;
    let x = load_profile(&game, profile)?;
    let br = modified_best_response(&game, &spec, i, &x)?;
    let doc = profile_to_doc(&game, &x.with_player(i, br.strategy.clone()));
    let out = json!({
        "player": game.players()[i],
        "s0": game.state_name(spec.s0),
        "lambda": spec.lambda_for(i),
        "value": br.value,
        "achieved": br.achieved,
        "strategy": doc[&game.players()[i]],
        "occupation": br.occupation,
    });
    let mut inputs = vec![game_path.to_path_buf(), spec_path.to_path_buf()];
    inputs.extend(profile.cloned());
    Ok(Done::ok(pretty(&out), inputs))
}

#[allow(clippy::too_many_arguments)]
fn cmd_equilibrium(
    game_path: &Path,
    spec_path: &Path,
    s0: Option<&String>,
    lambda: Option<f64>,
    grid: Option<&str>,
    eps: f64,
    restarts: usize,
    common: &Common,
) -> anyhow::Result<Done> {
    let game = load_game(game_path)?;
    let spec = load_spec(&game, spec_path, s0, lambda)?;
    let opts = SearchOptions {
        eps,
        restarts,
        seed: common.seed,
        ..SearchOptions::default()
    };
    let inputs = vec![game_path.to_path_buf(), spec_path.to_path_buf()];
    let results = match grid {
        Some(g) => trace_equilibria(&game, &spec, &parse_grid(Some(g))?, &opts)?,
        None => vec![stationary_equilibrium(&game, &spec, &opts)?],
    };
    let ok = results.iter().all(|r| r.certified);
    let text = if common.format == Format::Csv {
        let mut s = String::from("lambda,certified,max_gap");
        for p in game.players() {
            s.push_str(&format!(",payoff_{p}"));
        }
        s.push('\n');
        for r in &results {
            s.push_str(&format!("{},{},{:e}", r.lambda, r.certified, r.max_gap()));
            for v in &r.payoffs {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    } else if results.len() == 1 {
        pretty(&results[0].to_json(&game))
    } else {
        pretty(&Value::Array(
            results.iter().map(|r| r.to_json(&game)).collect(),
        ))
    };
    Ok(Done { text, ok, inputs })
}

#[allow(clippy::too_many_arguments)]
fn cmd_values(
    game_path: &Path,
    kind: &str,
    player: &str,
    lambda: Option<f64>,
    grid: Option<&str>,
    extrapolate: bool,
    spec_path: Option<&PathBuf>,
    format: Format,
) -> anyhow::Result<Done> {
    let game = load_game(game_path)?;
    let kind = ValueKind::parse(kind)?;
    let i = player_arg(&game, player)?;
    let mut inputs = vec![game_path.to_path_buf()];
    if let Some(p) = spec_path {
        let spec = load_spec(&game, p, None, lambda)?;
        inputs.push(p.clone());
        let opts = StatOptions::default();
        let v = match kind {
            ValueKind::MaxMin => modified_maxmin_stat(&game, &spec, i, &opts)?,
            ValueKind::MinMax => stochgame::values::modified_minmax_stat(&game, &spec, i, &opts)?,
        };
        let out = json!({
            "player": game.players()[i],
            "kind": format!("{}_stat", kind.as_str()),
            "lambda": spec.lambda,
            "value": v.value,
            "evaluations": v.evaluations,
            "heuristic": v.heuristic,
            "profile": profile_to_doc(&game, &v.profile),
        });
        return Ok(Done::ok(pretty(&out), inputs));
    }
    if extrapolate || lambda.is_none() {
        let est = uniform_value(&game, i, kind, &parse_grid(grid)?)?;
        if format == Format::Csv {
            let mut s = String::from("state,limit,residual,fallback\n");
            for (k, name) in game.state_names().iter().enumerate() {
                s.push_str(&format!(
                    "{name},{},{:e},{}\n",
                    est.limits[k], est.residuals[k], est.fallback[k]
                ));
            }
            return Ok(Done::ok(s, inputs));
        }
        return Ok(Done::ok(pretty(&est.to_json(&game)), inputs));
    }
    let l = lambda.expect("checked above");
    let tol = 1e-9 * game.scale();
    let rep = match kind {
        ValueKind::MinMax => discounted_minmax(&game, i, l, tol)?,
        ValueKind::MaxMin => discounted_maxmin(&game, i, l, tol)?,
    };
    if format == Format::Csv {
        let mut s = String::from("state,value\n");
        for (k, name) in game.state_names().iter().enumerate() {
            s.push_str(&format!("{name},{}\n", rep.values[k]));
        }
        return Ok(Done::ok(s, inputs));
    }
    Ok(Done::ok(pretty(&rep.to_json(&game)), inputs))
}

fn cmd_classify(
    game_path: &Path,
    grid: Option<&str>,
    tol: f64,
    format: Format,
) -> anyhow::Result<Done> {
    let game = load_game(game_path)?;
    let vbar = uniform_minmax_all(&game, &parse_grid(grid)?)?;
    let rep = classify(&game, &vbar, tol * game.scale());
    let inputs = vec![game_path.to_path_buf()];
    if format == Format::Csv {
        let mut s = String::from("state,minmax_block,sibling_block\n");
        for (k, name) in game.state_names().iter().enumerate() {
            s.push_str(&format!(
                "{name},{},{}\n",
                rep.minmax_partition.block_of(k),
                rep.sibling_partition.block_of(k)
            ));
        }
        return Ok(Done::ok(s, inputs));
    }
    eprint!("{}", rep.table(&game));
    let mut out = rep.to_json(&game);
    out["uniform_minmax"] = Value::Array(vbar.iter().map(|v| named_values(&game, v)).collect());
    Ok(Done::ok(pretty(&out), inputs))
}

fn cmd_uniform_eq(
    game_path: &Path,
    eps: f64,
    grid: Option<&str>,
    s0: Option<&String>,
    common: &Common,
) -> anyhow::Result<Done> {
    let game = load_game(game_path)?;
    let opts = PipelineOptions {
        grid: parse_grid(grid)?,
        search: SearchOptions {
            seed: common.seed,
            ..SearchOptions::default()
        },
        ..PipelineOptions::default()
    };
    let res = uniform_pipeline(&game, eps, &opts)?;
    let inputs = vec![game_path.to_path_buf()];
    let mut out = json!({"pipeline": res.to_json(&game)});
    let Some(sigma) = &res.sigma else {
        eprintln!("game is not strongly controllable; pipeline stopped after classification");
        out["verification"] = Value::Null;
        return Ok(Done {
            text: pretty(&out),
            ok: false,
            inputs,
        });
    };
    let states = s0
        .map(|s| game.state_index(s).map(|k| vec![k]))
        .transpose()?;
    let vopts = VerifyOptions {
        seed: common.seed,
        states,
        ..VerifyOptions::default()
    };
    let rep = verify_uniform_eq(&game, sigma, &res.vbar, eps, &vopts)?;
    eprint!("{}", rep.summary(&game));
    out["verification"] = rep.to_json(&game);
    Ok(Done {
        text: pretty(&out),
        ok: rep.pass,
        inputs,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    game_path: &Path,
    s0: &str,
    profile: Option<&PathBuf>,
    horizon: usize,
    partition: Option<&PathBuf>,
    plays: Option<usize>,
    lambda: Option<f64>,
    common: &Common,
) -> anyhow::Result<Done> {
    let game = load_game(game_path)?;
    let s = game.state_index(s0)?;
    let x = load_profile(&game, profile)?;
    let autos = stationary_profile(&game, &x);
    let mut inputs = vec![game_path.to_path_buf()];
    inputs.extend(profile.cloned());
    if let Some(n) = plays {
        let l = lambda.ok_or_else(|| anyhow!("--plays needs --lambda"))?;
        let est = mc_discounted_payoff(&game, &autos, s, l, n, common.seed, 1e-3 * game.scale())?;
        let out = json!({
            "s0": s0,
            "lambda": l,
            "plays": est.plays,
            "truncation": est.horizon,
            "batches": est.batches,
            "mean": est.mean,
            "ci99": est.ci,
        });
        return Ok(Done::ok(pretty(&out), inputs));
    }
    let play = simulate(&game, &autos, s, horizon, common.seed)?;
    if let Some(p) = partition {
        inputs.push(p.clone());
        let blocks: Vec<Vec<String>> =
            serde_json::from_str(&read(p)?).map_err(|e| Error::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        let part = Partition::from_names(&game, &blocks)?;
        let seg = segment_runs(&play, &part);
        if common.format == Format::Csv {
            return Ok(Done::ok(seg.to_csv(&game, &play, &part), inputs));
        }
        let out = json!({
            "switches": seg.switches,
            "taus": seg.taus,
            "run_lengths": seg.run_lengths(),
            "average": play.average(),
        });
        return Ok(Done::ok(pretty(&out), inputs));
    }
    Ok(Done::ok(play.to_jsonl(&game), inputs))
}

fn cmd_coin(p: f64, samples: usize, seed: u64) -> anyhow::Result<Done> {
    let r = coin_run_oracle(p, samples, seed)?;
    let out = json!({
        "p": r.p,
        "samples": r.samples,
        "mean": r.mean,
        "ci99": r.ci,
        "candidates": {"p/(1-p)": r.pmf_mean, "1/(1-p)": r.stated_mean},
        "matches": r.verdict(),
    });
    let ok = r.matches_pmf || r.matches_stated;
    Ok(Done {
        text: pretty(&out),
        ok,
        inputs: vec![],
    })
}

struct Check {
    name: String,
    got: f64,
    want: f64,
    tol: f64,
}

impl Check {
    fn new(name: impl Into<String>, got: f64, want: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            got,
            want,
            tol,
        }
    }

    fn pass(&self) -> bool {
        (self.got - self.want).abs() <= self.tol
    }

    fn json(&self) -> Value {
        json!({"check": self.name, "got": self.got, "want": self.want, "tol": self.tol, "pass": self.pass()})
    }
}

fn reproduce_example1() -> anyhow::Result<(StochasticGame, String, Vec<Check>)> {
    let (lambda, p) = (0.6, 0.5);
    let game = fixtures::example1(p, fixtures::example1_y(lambda, p));
    let mut table = String::from("s0,best_action_at_s1,contribution_T,contribution_B\n");
    let mut checks = Vec::new();
    for (s0, want) in [(0usize, "B"), (1, "T")] {
        let spec = fixtures::example1_spec(&game, s0, lambda);
        let br = modified_best_response(&game, &spec, 0, &StationaryProfile::uniform(&game))?;
        let act = &game.actions(1, 0)[br.strategy.mode(1)];
        let pure = br.strategy.at(1).iter().any(|&q| q == 1.0);
        let part = &spec.per_player[0].partition;
        let mut contrib = Vec::new();
        for a in 0..2 {
            let x = StationaryProfile(vec![stochgame::StationaryStrategy::pure(
                &game,
                0,
                &[0, a, 0, 0],
            )]);
            let occ = occupation_stationary(&game, s0, lambda, &x)?;
            let bd = block_breakdown(&game, &occ, part)?;
            let d = part.block_of(0);
            contrib.push(bd.payoffs[d][0].min(spec.per_player[0].cutoffs.0[d] * bd.times[d]));
        }
        table.push_str(&format!(
            "{},{act},{},{}\n",
            game.state_name(s0),
            contrib[0],
            contrib[1]
        ));
        checks.push(Check::new(
            format!("best response from {} plays {want}", game.state_name(s0)),
            f64::from(u8::from(act == want && pure)),
            1.0,
            0.0,
        ));
        if s0 == 0 {
            checks.push(Check::new(
                "in-block contribution under T",
                contrib[0],
                0.0,
                1e-9,
            ));
            checks.push(Check::new(
                "in-block contribution under B",
                contrib[1],
                0.0,
                1e-9,
            ));
        }
    }
    Ok((game, table, checks))
}

fn reproduce_example2() -> anyhow::Result<(StochasticGame, String, Vec<Check>)> {
    let game = fixtures::example2();
    let x = StationaryProfile::uniform(&game);
    let mut table = String::from("lambda,payoff,modified_payoff\n");
    let mut checks = Vec::new();
    for lambda in [0.5, 0.9, 0.99, 0.999] {
        let occ = occupation_stationary(&game, 0, lambda, &x)?;
        let g = discounted_payoff(&game, &occ)[0];
        let spec = fixtures::example2_spec(&game, lambda);
        let m = modified_payoff(&game, &spec, &occ, 0)?;
        table.push_str(&format!("{lambda},{g},{m}\n"));
        if lambda == 0.5 {
            checks.push(Check::new(
                "payoff at 0.5",
                g,
                6.0 * lambda / (1.0 + lambda),
                1e-9,
            ));
            checks.push(Check::new(
                "modified payoff at 0.5",
                m,
                4.0 * lambda / (1.0 + lambda),
                1e-9,
            ));
        }
        if lambda == 0.999 {
            checks.push(Check::new("payoff at 0.999", g, 3.0, 5e-3));
            checks.push(Check::new("modified payoff at 0.999", m, 2.0, 5e-3));
        }
    }
    Ok((game, table, checks))
}

fn reproduce_bigmatch() -> anyhow::Result<(StochasticGame, String, Vec<Check>)> {
    let game = fixtures::big_match();
    let mut table = String::from("lambda,maxmin_stat,alpha\n");
    let mut checks = Vec::new();
    for lambda in [0.5, 0.9, 0.99] {
        let spec = fixtures::big_match_spec(&game, lambda);
        let v = modified_maxmin_stat(&game, &spec, 0, &StatOptions::default())?;
        let p = v.profile.player(0).at(0)[0];
        let alpha = (1.0 - lambda) / (1.0 - lambda * (1.0 - p));
        table.push_str(&format!("{lambda},{},{alpha}\n", v.value));
        checks.push(Check::new(
            format!("maxmin_stat at {lambda}"),
            v.value,
            1.0 / 3.0,
            1e-3,
        ));
        checks.push(Check::new(
            format!("alpha at {lambda}"),
            alpha,
            2.0 / 3.0,
            1e-2,
        ));
    }
    Ok((game, table, checks))
}

fn cmd_reproduce(name: &str, common: &Common, args: &[String]) -> anyhow::Result<bool> {
    let (game, table, checks) = match name {
        "example1" => reproduce_example1()?,
        "example2" => reproduce_example2()?,
        "bigmatch" => reproduce_bigmatch()?,
        other => bail!("unknown example `{other}`"),
    };
    let dir = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("reproduce-{name}")));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let ok = checks.iter().all(Check::pass);
    let files = [
        ("game.json", game_to_json(&game)),
        ("table.csv", table),
        (
            "checks.json",
            pretty(
                &json!({"pass": ok, "checks": checks.iter().map(Check::json).collect::<Vec<_>>()}),
            ),
        ),
    ];
    let mut outputs = Vec::new();
    for (file, body) in &files {
        let path = dir.join(file);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        outputs.push(json!({"path": path.display().to_string(), "sha256": hex::encode(Sha256::digest(body))}));
    }
    let man = manifest("reproduce", args, common, &[], outputs);
    fs::write(dir.join("manifest.json"), pretty(&man))?;
    for c in checks.iter().filter(|c| !c.pass()) {
        eprintln!("FAIL {}: got {} want {} ± {}", c.name, c.got, c.want, c.tol);
    }
    println!("{}", dir.display());
    Ok(ok)
}

fn emit(done: &Done, command: &str, args: &[String], common: &Common) -> anyhow::Result<()> {
    let digest = hex::encode(Sha256::digest(&done.text));
    match &common.out {
        Some(path) => {
            fs::write(path, &done.text).with_context(|| format!("writing {}", path.display()))?;
            let out = json!({"path": path.display().to_string(), "sha256": digest});
            let man = manifest(command, args, common, &done.inputs, vec![out]);
            let mut mpath = path.clone().into_os_string();
            mpath.push(".manifest.json");
            fs::write(&mpath, pretty(&man))?;
        }
        None => {
            print!("{}", done.text);
            let out = json!({"path": "stdout", "sha256": digest});
            let man = manifest(command, args, common, &done.inputs, vec![out]);
            eprintln!("{}", serde_json::to_string(&man)?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Lp(_) | Error::Numerical(_) | Error::CapExceeded { .. }) => 3,
        _ => 2,
    }
}

fn run(cli: Cli, args: &[String]) -> anyhow::Result<bool> {
    let (name, common, result) = match &cli.cmd {
        Cmd::Validate { game, common } => ("validate", common, cmd_validate(game)),
        Cmd::Eval {
            game,
            s0,
            lambda,
            profile,
            horizon,
            common,
        } => (
            "eval",
            common,
            cmd_eval(game, s0, *lambda, profile.as_ref(), *horizon, common.format),
        ),
        Cmd::ModifiedEval {
            game,
            spec,
            profile,
            s0,
            lambda,
            common,
        } => (
            "modified-eval",
            common,
            cmd_modified_eval(game, spec, profile.as_ref(), s0.as_ref(), *lambda),
        ),
        Cmd::BestResponse {
            game,
            spec,
            player,
            profile,
            s0,
            lambda,
            common,
        } => (
            "best-response",
            common,
            cmd_best_response(game, spec, player, profile.as_ref(), s0.as_ref(), *lambda),
        ),
        Cmd::Equilibrium {
            game,
            spec,
            s0,
            lambda,
            lambda_grid,
            eps,
            restarts,
            common,
        } => (
            "equilibrium",
            common,
            cmd_equilibrium(
                game,
                spec,
                s0.as_ref(),
                *lambda,
                lambda_grid.as_deref(),
                *eps,
                *restarts,
                common,
            ),
        ),
        Cmd::Values {
            game,
            kind,
            player,
            lambda,
            lambda_grid,
            extrapolate,
            spec,
            common,
        } => (
            "values",
            common,
            cmd_values(
                game,
                kind,
                player,
                *lambda,
                lambda_grid.as_deref(),
                *extrapolate,
                spec.as_ref(),
                common.format,
            ),
        ),
        Cmd::Classify {
            game,
            lambda_grid,
            tol,
            common,
        } => (
            "classify",
            common,
            cmd_classify(game, lambda_grid.as_deref(), *tol, common.format),
        ),
        Cmd::UniformEq {
            game,
            eps,
            lambda_grid,
            s0,
            common,
        } => (
            "uniform-eq",
            common,
            cmd_uniform_eq(game, *eps, lambda_grid.as_deref(), s0.as_ref(), common),
        ),
        Cmd::Simulate {
            game,
            s0,
            profile,
            horizon,
            partition,
            plays,
            lambda,
            common,
        } => (
            "simulate",
            common,
            cmd_simulate(
                game,
                s0,
                profile.as_ref(),
                *horizon,
                partition.as_ref(),
                *plays,
                *lambda,
                common,
            ),
        ),
        Cmd::Coin { p, samples, common } => ("coin", common, cmd_coin(*p, *samples, common.seed)),
        Cmd::Reproduce { name, common } => return cmd_reproduce(name, common, args),
    };
    let done = result?;
    emit(&done, name, args, common)?;
    Ok(done.ok)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(cli, &args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
