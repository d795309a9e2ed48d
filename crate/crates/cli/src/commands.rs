use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};
use visbias_core::classimg::{
    accumulate_log, estimate_cohorts, read_trials, write_trials, CohortKey, EstimateMode, StimulusModel, TrialRecord,
};
use visbias_core::conesvm::{fit_cone_svm, fit_svm, theta_from_degrees, ConeConstraint, SvmModel};
use visbias_core::eval::{
    eval_model, eval_template, generate_synthetic, CrossDatasetRecipe, LabeledSample, LowDataRecipe,
    SyntheticDatasetSpec,
};
use visbias_core::featspace::{render, sample_white_noise, FeatureSpace, FeatureVector};
use visbias_core::io::{read_vectors_file, write_jsonl, VectorRecord};
use visbias_core::observer::{run_session_with, CatchPlan, LinearObserver};
use visbias_core::rng::derive_seed;
use visbias_session::{serve_service, Service, SessionConfig, SessionError};

use crate::args::*;
use crate::output::{header, Output};
use crate::UsageError;

pub struct Ctx {
    pub seed: u64,
    pub seed_given: bool,
    pub format: Format,
    pub out: Output,
}

impl Ctx {
    fn config<T: Serialize>(&self, args: &T) -> Value {
        let mut v = serde_json::to_value(args).expect("arguments serialize");
        if let Value::Object(m) = &mut v {
            m.insert("seed".into(), self.seed.into());
            m.insert("format".into(), serde_json::to_value(self.format).expect("format serializes"));
        }
        v
    }

    fn json_only(&self, command: &str) -> Result<()> {
        if self.format == Format::Csv {
            return Err(UsageError(format!("`{command}` has no CSV output")).into());
        }
        Ok(())
    }
}

fn first_vector(path: &Path) -> Result<VectorRecord> {
    read_vectors_file(path)
        .with_context(|| format!("cannot read vectors from {}", path.display()))?
        .into_iter()
        .next()
        .ok_or_else(|| anyhow!("{} holds no vectors", path.display()))
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, items)?;
    Ok(buf)
}

fn stimulus_model(space: &FeatureSpace, args: &ClassicArgs) -> Result<StimulusModel> {
    match (&args.base_a, &args.base_b) {
        (Some(a), Some(b)) => {
            if !(args.noise_scale.is_finite() && args.noise_scale > 0.0) {
                return Err(UsageError(format!("--noise-scale must be positive, got {}", args.noise_scale)).into());
            }
            Ok(StimulusModel::Classic {
                base_a: first_vector(a)?.vector_in(space)?.into_values(),
                base_b: first_vector(b)?.vector_in(space)?.into_values(),
                noise_scale: args.noise_scale,
            })
        }
        _ => Ok(StimulusModel::NoiseOnly),
    }
}

fn read_log(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_trials(std::io::BufReader::new(file)).with_context(|| format!("bad trial log {}", path.display()))
}

fn read_samples(path: &Path) -> Result<Vec<LabeledSample>> {
    let samples = read_vectors_file(path)
        .with_context(|| format!("cannot read {}", path.display()))?
        .iter()
        .map(LabeledSample::from_record)
        .collect::<visbias_core::Result<Vec<_>>>()
        .with_context(|| format!("bad labeled data in {}", path.display()))?;
    if samples.is_empty() {
        bail!("{} holds no samples", path.display());
    }
    Ok(samples)
}

pub fn simulate(ctx: &Ctx, args: &SimulateArgs) -> Result<()> {
    ctx.json_only("simulate")?;
    let space = crate::space::parse_space(&args.space)?;
    let template = match &args.observer_template {
        Some(p) => first_vector(p)?.vector_in(&space)?,
        None => sample_white_noise(&space, derive_seed(ctx.seed, 1)),
    }
    .l2_normalize()
    .context("observer template must be nonzero")?;
    let mut observer = LinearObserver::new(&args.observer_id, template.clone(), args.sigma, args.tau, derive_seed(ctx.seed, 2))?;
    if let Some(c) = &args.cohort {
        observer = observer.with_cohort(c);
    }
    let catch = match args.catch_every {
        Some(0) => return Err(UsageError("--catch-every must be at least 1".into()).into()),
        Some(every) => Some(CatchPlan {
            every,
            offset: derive_seed(ctx.seed, 4) % every,
            direction: template.clone(),
            amplitude: args.catch_amplitude,
        }),
        None => None,
    };
    let model = stimulus_model(&space, &args.classic)?;
    let log = run_session_with(&mut observer, &space, args.trials, derive_seed(ctx.seed, 3), &model, catch.as_ref())?;

    let head = header("simulate", ctx.config(args));
    if let Some(p) = &args.template_out {
        let mut rec = VectorRecord::new("observer-template", &template);
        rec.kind = Some("observer-template".into());
        let out = Output::new(Some(p.clone()));
        out.data(&jsonl(&[rec])?, head.clone())?;
    }
    let mut buf = Vec::new();
    write_trials(&mut buf, &log)?;
    ctx.out.data(&buf, head)
}

fn safe_name(s: &str) -> bool {
    !s.is_empty() && s.len() <= 100 && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) && !s.starts_with('.')
}

pub fn estimate(ctx: &Ctx, args: &EstimateArgs) -> Result<()> {
    ctx.json_only("estimate")?;
    let space = crate::space::parse_space(&args.space)?;
    let model = stimulus_model(&space, &args.classic)?;
    let mode = match args.mode {
        ModeArg::Classic => EstimateMode::Classic,
        ModeArg::NoiseOnly => EstimateMode::NoiseOnly,
    };
    if mode == EstimateMode::Classic && model == StimulusModel::NoiseOnly {
        return Err(UsageError("--mode classic needs --base-a and --base-b to rebuild the stimuli".into()).into());
    }
    let log = read_log(&args.log)?;
    let template = accumulate_log(&space, &model, &log)?.estimate(mode)?;
    let mut head = header("estimate", ctx.config(args));

    if let (Some(key), Some(dir)) = (&args.cohort_key, &args.cohort_dir) {
        let key: CohortKey = key.parse().map_err(|e: visbias_core::Error| UsageError(e.to_string()))?;
        let pairs = log
            .iter()
            .filter(|t| !t.is_catch)
            .map(|t| Ok((t.clone(), model.stimulus(&space, t)?)))
            .collect::<visbias_core::Result<Vec<_>>>()?;
        let cohorts = estimate_cohorts(&space, pairs, key)?;
        let mut files = Map::new();
        for (name, t) in &cohorts.templates {
            if !safe_name(name) {
                bail!("cohort `{name}` cannot be used as a file name");
            }
            let path = dir.join(format!("{name}.jsonl"));
            crate::output::write_file(&path, &jsonl(&[t.to_record(name.as_str())])?)?;
            files.insert(name.clone(), path.display().to_string().into());
        }
        head.insert("cohort_files".into(), Value::Object(files));
        head.insert("warnings".into(), json!(cohorts.warnings));
    }
    ctx.out.data(&jsonl(&[template.to_record("template")])?, head)
}

pub fn render_cmd(ctx: &Ctx, args: &RenderArgs) -> Result<()> {
    let space = crate::space::parse_space(&args.space)?;
    let x = first_vector(&args.template)?.vector_in(&space)?;
    let png = render(&x, &space, args.scale)?.to_png()?;
    ctx.out.data(&png, header("render", ctx.config(args)))
}

pub fn synth(ctx: &Ctx, args: &SynthArgs) -> Result<()> {
    ctx.json_only("synth")?;
    let spec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            let mut spec: SyntheticDatasetSpec = serde_json::from_str(&text).with_context(|| format!("bad spec {}", p.display()))?;
            if ctx.seed_given {
                spec.seed = ctx.seed;
            }
            spec
        }
        None => {
            if args.d == 0 {
                return Err(UsageError("--d must be at least 1".into()).into());
            }
            let mut mu_pos = vec![0.0; args.d];
            mu_pos[0] = args.separation;
            SyntheticDatasetSpec {
                d: args.d,
                mu_pos,
                mu_neg: vec![0.0; args.d],
                sigma: args.sigma,
                shift: vec![0.0; args.d],
                n_pos: args.n_pos,
                n_neg: args.n_neg,
                seed: ctx.seed,
            }
        }
    };
    let records: Vec<VectorRecord> = generate_synthetic(&spec)?.iter().map(LabeledSample::to_record).collect();
    let mut head = header("synth", ctx.config(args));
    head.insert("spec".into(), serde_json::to_value(&spec)?);
    ctx.out.data(&jsonl(&records)?, head)
}

pub fn fit(ctx: &Ctx, args: &FitArgs) -> Result<()> {
    ctx.json_only("fit")?;
    let samples = read_samples(&args.train)?;
    let space = samples[0].x.space_id().to_owned();
    let data: Vec<_> = samples.iter().map(LabeledSample::example).collect();
    let mut config = ctx.config(args);
    let model = match &args.prior {
        Some(p) => {
            let theta = match (args.theta, args.half_angle_deg) {
                (Some(t), _) => t,
                (None, Some(deg)) => theta_from_degrees(deg),
                (None, None) => theta_from_degrees(30.0),
            };
            config["theta"] = theta.into();
            let prior = first_vector(p)?.vector()?;
            if prior.space_id() != space {
                bail!("prior is in space `{}`, training data in `{space}`", prior.space_id());
            }
            let cone = ConeConstraint::around(&prior, theta)?;
            fit_cone_svm(&data, args.lambda, &cone)?
        }
        None => fit_svm(&data, args.lambda)?,
    };
    let mut body = Map::new();
    body.insert("space".into(), space.into());
    body.insert("model".into(), model.to_json_value());
    body.insert("report".into(), serde_json::to_value(&model.report)?);
    ctx.out.json(header("fit", config), body)
}

fn read_model(path: &Path) -> Result<(SvmModel, Option<String>)> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut v: Value = serde_json::from_str(&text).with_context(|| format!("bad model file {}", path.display()))?;
    let space = v.get("space").and_then(Value::as_str).map(str::to_owned);
    let model = match v.get_mut("model") {
        Some(m) => m.take(),
        None => v,
    };
    Ok((SvmModel::from_json_value(model)?, space))
}

pub fn eval(ctx: &Ctx, args: &EvalArgs) -> Result<()> {
    let test = read_samples(&args.test)?;
    let test_space = test[0].x.space_id();
    let result = match (&args.model, &args.template) {
        (Some(m), _) => {
            let (model, space) = read_model(m)?;
            if let Some(s) = space.filter(|s| s != test_space) {
                bail!("model was fit in space `{s}`, test data is in `{test_space}`");
            }
            eval_model(&model, &test)?
        }
        (None, Some(t)) => {
            let rec = first_vector(t)?;
            let x: FeatureVector = rec.vector()?;
            if x.space_id() != test_space {
                bail!("template is in space `{}`, test data in `{test_space}`", x.space_id());
            }
            eval_template(&x, &test)?
        }
        (None, None) => unreachable!("clap requires one scorer"),
    };
    let head = header("eval", ctx.config(args));
    match ctx.format {
        Format::Json => {
            let mut body = Map::new();
            body.insert("result".into(), serde_json::to_value(result)?);
            ctx.out.json(head, body)
        }
        Format::Csv => {
            let csv = format!("ap,chance,n,n_pos\n{},{},{},{}\n", result.ap, result.chance, result.n, result.n_pos);
            ctx.out.data(csv.as_bytes(), head)
        }
    }
}

fn load_recipe<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("bad recipe config {}", p.display()))
        }
        None => Ok(T::default()),
    }
}

pub fn experiment(ctx: &Ctx, args: &ExperimentArgs) -> Result<()> {
    let report = match args.recipe {
        RecipeArg::LowData => {
            let mut r: LowDataRecipe = load_recipe(args.config.as_deref())?;
            if ctx.seed_given {
                r.seed = ctx.seed;
            }
            r.run()?
        }
        RecipeArg::CrossDataset => {
            let mut r: CrossDatasetRecipe = load_recipe(args.config.as_deref())?;
            if ctx.seed_given {
                r.seed = ctx.seed;
            }
            r.run()?
        }
    };
    let head = header("experiment", ctx.config(args));
    match ctx.format {
        Format::Json => {
            let mut body = Map::new();
            body.insert("report".into(), serde_json::to_value(&report)?);
            ctx.out.json(head, body)
        }
        Format::Csv => {
            let mut head = head;
            head.insert("recipe".into(), report.config.clone());
            head.insert("repeat_seeds".into(), json!(report.repeat_seeds));
            ctx.out.data(report.to_csv().as_bytes(), head)
        }
    }
}

pub fn serve(ctx: &Ctx, args: &ServeArgs) -> Result<()> {
    ctx.json_only("serve")?;
    if ctx.out.path().is_some() {
        return Err(UsageError("`serve` writes no output file; drop --out".into()).into());
    }
    let service = Service::open(&args.data_dir)?;
    if let Some(p) = &args.session_config {
        let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
        let config: SessionConfig = serde_json::from_str(&text).with_context(|| format!("bad session config {}", p.display()))?;
        let id = config.session_id.clone();
        match service.with(&id, |s| Ok(s.config() == &config)) {
            Ok(true) => {}
            Ok(false) => bail!("session `{id}` already exists with a different config"),
            Err(SessionError::NotFound(_)) => {
                service.create(config)?;
            }
            Err(e) => return Err(e.into()),
        }
    }
    serve_service(args.addr, service)?;
    Ok(())
}
