//! INI-style run configuration: `[problem]`, `[inverse]`, `[study]`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fracwave_core::inverse::NoiseMode;
use fracwave_core::spectrum::{load_basis, load_functional, make_laplacian_basis};
use fracwave_core::{
    EigenBasis, Forcing, Functional, ProblemSpec, RecoverySettings, Samples, SpectralCoeffs, TimeGrid, TimeProfile,
};

use crate::io::{column_on_grid, parse_mode_list, read_table};

/// A configuration problem, located by file, line, section and key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub section: Option<String>,
    pub key: Option<String>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
        }
        write!(f, ": ")?;
        match (&self.section, &self.key) {
            (Some(s), Some(k)) => write!(f, "[{s}] {k}: ")?,
            (Some(s), None) => write!(f, "[{s}]: ")?,
            _ => {}
        }
        write!(f, "{}", self.msg)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

const PROBLEM_KEYS: &[&str] = &["alpha", "beta", "T", "N", "basis", "phi", "psi", "f", "functional", "q"];
const INVERSE_KEYS: &[&str] = &["tol", "max_iter", "relax", "q0", "mu_floor", "max_q_norm", "consistency_tol"];
const STUDY_KEYS: &[&str] = &["q_true", "refine", "levels", "deltas", "noise", "seed", "horizons", "probe_shift"];

fn known_keys(section: &str) -> Option<&'static [&'static str]> {
    match section {
        "problem" => Some(PROBLEM_KEYS),
        "inverse" => Some(INVERSE_KEYS),
        "study" => Some(STUDY_KEYS),
        _ => None,
    }
}

/// Potential specification; file-backed ones only exist on the config grid.
#[derive(Debug, Clone, PartialEq)]
pub enum QSpec {
    Zero,
    Constant(f64),
    /// `a + b sin(w t)`
    Sine { a: f64, b: f64, w: f64 },
    File(PathBuf),
}

impl QSpec {
    pub fn resolve(&self, grid: &TimeGrid) -> fracwave_core::Result<Samples> {
        Ok(match self {
            QSpec::Zero => Samples::zeros(*grid),
            QSpec::Constant(c) => Samples::constant(*grid, *c),
            QSpec::Sine { a, b, w } => Samples::from_fn(*grid, |t| a + b * (w * t).sin()),
            QSpec::File(p) => column_on_grid(&read_table(p)?, 1, grid, &p.display().to_string())?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct InverseSection {
    pub settings: RecoverySettings,
    pub q0: Option<QSpec>,
    pub mu_floor: f64,
    pub consistency_tol: f64,
}

#[derive(Debug, Clone)]
pub struct StudySection {
    pub q_true: Option<QSpec>,
    pub refine: usize,
    pub levels: Option<Vec<usize>>,
    pub deltas: Vec<f64>,
    pub noise: NoiseMode,
    pub seed: u64,
    pub horizons: Vec<f64>,
    pub probe_shift: f64,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub path: PathBuf,
    pub problem: ProblemSpec,
    pub q: Option<QSpec>,
    pub inverse: InverseSection,
    pub study: StudySection,
}

impl Config {
    pub fn grid(&self) -> TimeGrid {
        self.problem.grid
    }
}

struct Parser {
    path: PathBuf,
    dir: PathBuf,
    entries: Vec<Entry>,
}

impl Parser {
    fn fail(&self, e: Option<&Entry>, section: &str, key: Option<&str>, msg: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line: e.map(|e| e.line),
            section: Some(section.to_string()),
            key: key.map(str::to_string),
            msg: msg.into(),
        }
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.section == section && e.key == key)
    }

    fn required(&self, section: &str, key: &str) -> Result<&Entry, ConfigError> {
        self.entry(section, key)
            .ok_or_else(|| self.fail(None, section, Some(key), "missing required key"))
    }

    fn parse<T: std::str::FromStr>(&self, e: &Entry, what: &str) -> Result<T, ConfigError> {
        e.value
            .parse()
            .map_err(|_| self.fail(Some(e), &e.section, Some(&e.key), format!("expected {what}, got {:?}", e.value)))
    }

    fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.entry(section, key).map_or(Ok(default), |e| self.parse(e, "a number"))
    }

    fn list<T: std::str::FromStr>(&self, e: &Entry, what: &str) -> Result<Vec<T>, ConfigError> {
        e.value
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| self.fail(Some(e), &e.section, Some(&e.key), format!("expected a list of {what}, got {s:?}")))
            })
            .collect()
    }

    fn path(&self, rest: &str) -> PathBuf {
        let p = Path::new(rest.trim());
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    /// Existing file referenced by `file PATH`.
    fn file(&self, e: &Entry, rest: &str) -> Result<PathBuf, ConfigError> {
        if rest.trim().is_empty() {
            return Err(self.fail(Some(e), &e.section, Some(&e.key), "`file` needs a path"));
        }
        let p = self.path(rest);
        if !p.is_file() {
            return Err(self.fail(Some(e), &e.section, Some(&e.key), format!("file not found: {}", p.display())));
        }
        Ok(p)
    }

    fn core_err(&self, e: &Entry, err: fracwave_core::Error) -> ConfigError {
        self.fail(Some(e), &e.section, Some(&e.key), err.to_string())
    }

    fn words<'a>(&self, e: &'a Entry) -> (String, Vec<&'a str>, &'a str) {
        let v = e.value.trim();
        let (head, rest) = v.split_once(char::is_whitespace).unwrap_or((v, ""));
        (head.to_ascii_lowercase(), rest.split_whitespace().collect(), rest)
    }

    fn number(&self, e: &Entry, s: Option<&&str>, what: &str) -> Result<f64, ConfigError> {
        s.and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.fail(Some(e), &e.section, Some(&e.key), format!("expected {what} in {:?}", e.value)))
    }

    /// `decay P [scale S]` tail starting at `words[at]`.
    fn decay(&self, e: &Entry, w: &[&str], at: usize) -> Result<(f64, f64), ConfigError> {
        if w.get(at) != Some(&"decay") {
            return Err(self.fail(Some(e), &e.section, Some(&e.key), format!("expected `decay P [scale S]` in {:?}", e.value)));
        }
        let p = self.number(e, w.get(at + 1), "a decay exponent")?;
        let scale = match w.get(at + 2) {
            None => 1.0,
            Some(&"scale") => self.number(e, w.get(at + 3), "a scale")?,
            Some(_) => return Err(self.fail(Some(e), &e.section, Some(&e.key), format!("unexpected trailing text in {:?}", e.value))),
        };
        let used = if w.len() > at + 2 { at + 4 } else { at + 2 };
        if w.len() > used {
            return Err(self.fail(Some(e), &e.section, Some(&e.key), format!("unexpected trailing text in {:?}", e.value)));
        }
        Ok((p, scale))
    }

    fn basis(&self) -> Result<Arc<EigenBasis>, ConfigError> {
        let e = self.required("problem", "basis")?;
        let (head, w, rest) = self.words(e);
        let b = match head.as_str() {
            "laplacian" => {
                let k = w
                    .first()
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|_| w.len() == 1)
                    .ok_or_else(|| self.fail(Some(e), "problem", Some("basis"), "expected `laplacian K` with integer K"))?;
                make_laplacian_basis(k).map_err(|x| self.core_err(e, x))?
            }
            "file" => load_basis(&self.file(e, rest)?).map_err(|x| self.core_err(e, x))?,
            _ => return Err(self.fail(Some(e), "problem", Some("basis"), format!("expected `laplacian K` or `file PATH`, got {:?}", e.value))),
        };
        Ok(Arc::new(b))
    }

    fn coeffs(&self, key: &str, basis: &Arc<EigenBasis>) -> Result<SpectralCoeffs, ConfigError> {
        let e = self.required("problem", key)?;
        let (head, w, rest) = self.words(e);
        match head.as_str() {
            "zero" if w.is_empty() => Ok(SpectralCoeffs::zeros(basis.clone())),
            "decay" => {
                let mut all = vec!["decay"];
                all.extend(&w);
                let (p, s) = self.decay(e, &all, 0)?;
                Ok(SpectralCoeffs::decay(basis.clone(), s, p))
            }
            "file" => {
                let p = self.file(e, rest)?;
                let text = fs::read_to_string(&p).map_err(|x| self.fail(Some(e), "problem", Some(key), x.to_string()))?;
                let c = parse_mode_list(&text, &p.display().to_string(), basis.dim()).map_err(|x| self.core_err(e, x))?;
                SpectralCoeffs::new(basis.clone(), c).map_err(|x| self.core_err(e, x))
            }
            _ => Err(self.fail(Some(e), "problem", Some(key), format!("expected `zero`, `decay P [scale S]` or `file PATH`, got {:?}", e.value))),
        }
    }

    fn forcing(&self, basis: &Arc<EigenBasis>, grid: &TimeGrid) -> Result<Forcing, ConfigError> {
        let Some(e) = self.entry("problem", "f") else {
            return Ok(Forcing::Zero);
        };
        let (head, w, rest) = self.words(e);
        let separable = |profile: TimeProfile, at: usize| -> Result<Forcing, ConfigError> {
            let (p, s) = self.decay(e, &w, at)?;
            Ok(Forcing::Separable {
                profile,
                coeffs: SpectralCoeffs::decay(basis.clone(), s, p).coeffs().to_vec(),
            })
        };
        match head.as_str() {
            "zero" if w.is_empty() => Ok(Forcing::Zero),
            "exp-decay" => separable(TimeProfile::ExpDecay { rate: self.number(e, w.first(), "a rate")? }, 1),
            "monomial" => separable(TimeProfile::Monomial { power: self.number(e, w.first(), "a power")? }, 1),
            "constant" => separable(TimeProfile::Constant, 0),
            "file" => {
                let p = self.file(e, rest)?;
                let name = p.display().to_string();
                let table = read_table(&p).map_err(|x| self.core_err(e, x))?;
                let modes = (1..=basis.dim())
                    .map(|k| column_on_grid(&table, k, grid, &name))
                    .collect::<fracwave_core::Result<Vec<_>>>()
                    .map_err(|x| self.core_err(e, x))?;
                Ok(Forcing::Sampled(modes))
            }
            _ => Err(self.fail(
                Some(e),
                "problem",
                Some("f"),
                format!("expected `zero`, `exp-decay R decay P`, `monomial P decay Q`, `constant decay P` or `file PATH`, got {:?}", e.value),
            )),
        }
    }

    fn functional(&self, basis: &Arc<EigenBasis>) -> Result<Functional, ConfigError> {
        let e = self.required("problem", "functional")?;
        let (head, w, rest) = self.words(e);
        match head.as_str() {
            "decay" => {
                let mut all = vec!["decay"];
                all.extend(&w);
                let (p, s) = self.decay(e, &all, 0)?;
                Functional::power_decay(basis.clone(), s, p).map_err(|x| self.core_err(e, x))
            }
            "point" if w.len() == 1 => {
                let x0 = self.number(e, w.first(), "a point x0")?;
                Functional::point_evaluation(basis.clone(), x0).map_err(|x| self.core_err(e, x))
            }
            "file" => load_functional(&self.file(e, rest)?, basis.clone()).map_err(|x| self.core_err(e, x)),
            _ => Err(self.fail(Some(e), "problem", Some("functional"), format!("expected `decay P [scale S]`, `point X0` or `file PATH`, got {:?}", e.value))),
        }
    }

    fn qspec(&self, section: &str, key: &str) -> Result<Option<QSpec>, ConfigError> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        let (head, w, rest) = self.words(e);
        let spec = match (head.as_str(), w.len()) {
            ("zero", 0) => QSpec::Zero,
            ("constant", 1) => QSpec::Constant(self.number(e, w.first(), "a constant")?),
            ("sine", 3) => QSpec::Sine {
                a: self.number(e, w.first(), "a")?,
                b: self.number(e, w.get(1), "b")?,
                w: self.number(e, w.get(2), "w")?,
            },
            ("file", _) => QSpec::File(self.file(e, rest)?),
            _ => return Err(self.fail(Some(e), section, Some(key), format!("expected `zero`, `constant C`, `sine A B W` or `file PATH`, got {:?}", e.value))),
        };
        Ok(Some(spec))
    }

    fn build(&self) -> Result<Config, ConfigError> {
        let alpha_e = self.required("problem", "alpha")?;
        let alpha: f64 = self.parse(alpha_e, "a number")?;
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(self.fail(Some(alpha_e), "problem", Some("alpha"), format!("alpha must lie in (1,2), got {alpha}")));
        }
        let beta_e = self.required("problem", "beta")?;
        let beta: f64 = self.parse(beta_e, "a number")?;
        if !(beta > 0.0 && beta < 1.0) {
            return Err(self.fail(Some(beta_e), "problem", Some("beta"), format!("beta must lie in (0,1), got {beta}")));
        }
        let t_e = self.required("problem", "T")?;
        let horizon: f64 = self.parse(t_e, "a number")?;
        let n_e = self.required("problem", "N")?;
        let steps: usize = self.parse(n_e, "a positive integer")?;
        let grid = TimeGrid::new(horizon, steps).map_err(|x| {
            let e = if horizon > 0.0 { n_e } else { t_e };
            self.core_err(e, x)
        })?;

        let basis = self.basis()?;
        let problem = ProblemSpec {
            alpha,
            beta,
            phi: self.coeffs("phi", &basis)?,
            psi: self.coeffs("psi", &basis)?,
            forcing: self.forcing(&basis, &grid)?,
            grid,
            functional: self.functional(&basis)?,
            basis,
        };
        problem
            .validate()
            .map_err(|x| self.fail(None, "problem", None, x.to_string()))?;

        let mut settings = RecoverySettings::default();
        if let Some(e) = self.entry("inverse", "tol") {
            settings.tol = self.parse(e, "a number")?;
        }
        if let Some(e) = self.entry("inverse", "max_iter") {
            settings.max_iter = self.parse(e, "a positive integer")?;
        }
        if let Some(e) = self.entry("inverse", "relax") {
            settings.relaxation = self.parse(e, "a number")?;
        }
        if let Some(e) = self.entry("inverse", "max_q_norm") {
            settings.max_q_norm = self.parse(e, "a number")?;
        }
        settings.validate().map_err(|x| self.fail(None, "inverse", None, x.to_string()))?;
        if settings.max_iter == 0 {
            return Err(self.fail(self.entry("inverse", "max_iter"), "inverse", Some("max_iter"), "must be at least 1"));
        }
        let mu_floor = self.f64_or("inverse", "mu_floor", 0.1)?;
        if !(mu_floor > 0.0) {
            return Err(self.fail(self.entry("inverse", "mu_floor"), "inverse", Some("mu_floor"), "must be positive"));
        }
        let consistency_tol = self.f64_or("inverse", "consistency_tol", 1e-8)?;
        if !(consistency_tol > 0.0) {
            return Err(self.fail(self.entry("inverse", "consistency_tol"), "inverse", Some("consistency_tol"), "must be positive"));
        }
        let inverse = InverseSection {
            q0: self.qspec("inverse", "q0")?,
            settings,
            mu_floor,
            consistency_tol,
        };

        let refine = match self.entry("study", "refine") {
            Some(e) => {
                let r: usize = self.parse(e, "an integer")?;
                if r < 2 {
                    return Err(self.fail(Some(e), "study", Some("refine"), format!("refinement factor must be >= 2, got {r}")));
                }
                r
            }
            None => 2,
        };
        let levels = match self.entry("study", "levels") {
            Some(e) => {
                let l: Vec<usize> = self.list(e, "integers")?;
                if l.len() < 2 || l.iter().any(|&n| n < 2) || l.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(self.fail(Some(e), "study", Some("levels"), "need at least two increasing grid sizes >= 2"));
                }
                Some(l)
            }
            None => None,
        };
        let deltas = match self.entry("study", "deltas") {
            Some(e) => {
                let d: Vec<f64> = self.list(e, "numbers")?;
                if d.is_empty() || d.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(self.fail(Some(e), "study", Some("deltas"), "need one or more finite, non-negative deltas"));
                }
                d
            }
            None => vec![0.0, 1e-3, 3e-3, 1e-2],
        };
        let noise = match self.entry("study", "noise") {
            Some(e) => e
                .value
                .parse::<NoiseMode>()
                .map_err(|x| self.core_err(e, x))?,
            None => NoiseMode::SmoothSine,
        };
        let seed = match self.entry("study", "seed") {
            Some(e) => self.parse(e, "a non-negative integer")?,
            None => 0,
        };
        let horizons = match self.entry("study", "horizons") {
            Some(e) => {
                let h: Vec<f64> = self.list(e, "numbers")?;
                if h.is_empty() || h.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(self.fail(Some(e), "study", Some("horizons"), "horizons must be positive"));
                }
                h
            }
            None => vec![0.25, 0.5, 1.0],
        };
        let probe_shift = self.f64_or("study", "probe_shift", 0.1)?;
        if probe_shift == 0.0 || !probe_shift.is_finite() {
            return Err(self.fail(self.entry("study", "probe_shift"), "study", Some("probe_shift"), "must be finite and nonzero"));
        }
        let study = StudySection {
            q_true: self.qspec("study", "q_true")?,
            refine,
            levels,
            deltas,
            noise,
            seed,
            horizons,
            probe_shift,
        };

        let q = self.qspec("problem", "q")?;
        let cfg = Config {
            path: self.path.clone(),
            problem,
            q,
            inverse,
            study,
        };
        // file-backed potentials must fit the grid
        for (section, key, spec) in [
            ("problem", "q", &cfg.q),
            ("inverse", "q0", &cfg.inverse.q0),
            ("study", "q_true", &cfg.study.q_true),
        ] {
            if let Some(s @ QSpec::File(_)) = spec {
                s.resolve(&cfg.problem.grid)
                    .map_err(|x| self.core_err(self.entry(section, key).expect("present"), x))?;
            }
        }
        Ok(cfg)
    }
}

fn lex(text: &str, path: &Path) -> Result<Vec<Entry>, ConfigError> {
    let fail = |line: usize, section: Option<&str>, key: Option<&str>, msg: String| ConfigError {
        path: path.to_path_buf(),
        line: Some(line),
        section: section.map(str::to_string),
        key: key.map(str::to_string),
        msg,
    };
    let mut section: Option<String> = None;
    let mut out: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| fail(line_no, None, None, format!("malformed section header {line:?}")))?
                .trim();
            if known_keys(name).is_none() {
                return Err(fail(line_no, Some(name), None, "unknown section (expected problem, inverse or study)".into()));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(fail(line_no, section.as_deref(), None, format!("expected `key = value`, got {line:?}")));
        };
        let Some(sec) = section.clone() else {
            return Err(fail(line_no, None, Some(k.trim()), "key outside of any section".into()));
        };
        let key = k.trim();
        // trailing comments
        let value = v.split(" #").next().unwrap_or("").trim();
        if !known_keys(&sec).is_some_and(|keys| keys.contains(&key)) {
            return Err(fail(line_no, Some(&sec), Some(key), "unknown key".into()));
        }
        if value.is_empty() {
            return Err(fail(line_no, Some(&sec), Some(key), "empty value".into()));
        }
        if let Some(prev) = out.iter().find(|e| e.section == sec && e.key == key) {
            return Err(fail(line_no, Some(&sec), Some(key), format!("duplicate key (first set on line {})", prev.line)));
        }
        out.push(Entry {
            section: sec,
            key: key.to_string(),
            value: value.to_string(),
            line: line_no,
        });
    }
    Ok(out)
}

/// Parses and fully validates a configuration; relative paths resolve
/// against `dir`.
pub fn parse_config_str(text: &str, path: &Path, dir: &Path) -> Result<Config, ConfigError> {
    let parser = Parser {
        path: path.to_path_buf(),
        dir: dir.to_path_buf(),
        entries: lex(text, path)?,
    };
    parser.build()
}

pub fn parse_config(path: &Path) -> Result<Config, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: None,
        section: None,
        key: None,
        msg: format!("cannot read config: {e}"),
    })?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, path, &dir)
}
