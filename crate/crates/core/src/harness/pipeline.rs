use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};

use super::{ExperimentConfig, PipelineSpec, Selector, SAE_STRUCTURE_CANDIDATES};
use crate::data::{kfold, signed_labels, standardize_fit, train_rows_excluding, Dataset, Label, SplitIndices, StandardizationParams};
use crate::error::{Error, Result};
use crate::lasso::{lambda_path, lasso_cv, lasso_fit_centered_path, selected_features, DEFAULT_MAX_ITER, DEFAULT_SELECTION_EPS, DEFAULT_TOL};
use crate::linalg::column_means;
use crate::pca::{pca_fit, pca_transform, select_components_by_power_matrix, ComponentRanking, PcaModel};
use crate::sae::{fine_tune, sae_features, sae_predict, sae_pretrain, SaeModel, TrainConfig};
use crate::svm::{accuracy, svm_cv_with, svm_predict, svm_train_with, FoldClassifier, LinearSvmModel, SvmClassifier, SvmParams, SvmSolver};
use crate::ttest::{select_top_m, ttest_cv, two_sample_t_matrix};

/// Fold assignment of a pipeline run uses seed `seed + FOLD_SEED_OFFSET`.
pub const FOLD_SEED_OFFSET: u64 = 10_000;
/// SAE initialization uses seed `seed + SAE_SEED_OFFSET` (layer k adds k more).
pub const SAE_SEED_OFFSET: u64 = 20_000;

/// Last step of a feature map: keep everything, keep some columns, or project.
#[derive(Clone, Debug, PartialEq)]
pub enum Reduction {
    All,
    Columns(Vec<usize>),
    Pca(PcaModel<f64>),
}

impl Reduction {
    fn apply(&self, x: Array2<f64>) -> Result<Array2<f64>> {
        match self {
            Reduction::All => Ok(x),
            Reduction::Columns(cols) => Ok(x.select(Axis(1), cols)),
            Reduction::Pca(model) => pca_transform(model, x.view()),
        }
    }
}

/// A fine-tuned SAE and the standardization applied to its outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedSae {
    pub model: SaeModel<f64>,
    pub scaling: Option<StandardizationParams<f64>>,
    pub l2: f64,
}

impl FittedSae {
    fn features(&self, x_std: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let h = sae_features(&self.model, x_std)?;
        match &self.scaling {
            Some(p) => p.apply_matrix(h.view()),
            None => Ok(h),
        }
    }
}

/// Everything fitted on the training rows that turns raw feature rows into SVM inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub standardization: StandardizationParams<f64>,
    pub keep_raw: bool,
    pub sae: Option<FittedSae>,
    pub reduction: Reduction,
}

impl FeatureMap {
    /// Standardized raw columns and/or SAE outputs, before reduction.
    fn base_features(&self, x_std: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match (&self.sae, self.keep_raw) {
            (None, _) => Ok(x_std.to_owned()),
            (Some(sae), false) => sae.features(x_std),
            (Some(sae), true) => {
                let h = sae.features(x_std)?;
                concatenate(Axis(1), &[x_std, h.view()]).map_err(|e| Error::dim(e.to_string()))
            }
        }
    }

    /// Raw feature rows to SVM inputs.
    pub fn transform(&self, x_raw: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let x_std = self.standardization.apply_matrix(x_raw)?;
        self.reduction.apply(self.base_features(x_std.view())?)
    }
}

/// Values chosen by the inner cross-validations.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparameters {
    pub c: f64,
    pub lambda: Option<f64>,
    pub m: Option<usize>,
    pub n_pcs: Option<usize>,
    pub l2: Option<f64>,
    pub sae_dims: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineRun {
    pub spec: PipelineSpec,
    /// Fraction of test rows classified correctly.
    pub accuracy: f64,
    pub feature_map: FeatureMap,
    pub svm: LinearSvmModel<f64>,
    pub hyper: Hyperparameters,
}

impl PipelineRun {
    /// Number of SVM input features.
    pub fn n_inputs(&self) -> usize {
        self.svm.w.len()
    }
}

/// SAEs fitted earlier in the same repeat. Valid only for one (data, split, seed, config).
#[derive(Default)]
pub(crate) struct SaeCache {
    supervised: Option<(FittedSae, Vec<usize>)>,
    semi: Option<(FittedSae, Vec<usize>)>,
}

fn stage<T>(name: &'static str) -> impl FnOnce(Error) -> Result<T> {
    move |e| Err(e.in_stage(name))
}

fn rows_of(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

fn labels_of(y: &[Label], rows: &[usize]) -> Vec<Label> {
    rows.iter().map(|&i| y[i]).collect()
}

fn check_split(ds: &Dataset<f64>, split: &SplitIndices, unlabeled_rows: &[usize]) -> Result<()> {
    for (side, rows) in [("train", &split.train), ("test", &split.test)] {
        if rows.is_empty() {
            return Err(Error::invalid(format!("{side} split is empty")));
        }
        for &i in rows.iter() {
            match ds.labels().get(i) {
                Some(l) if l.is_labeled() => {}
                Some(_) => return Err(Error::invalid(format!("{side} row {i} is unlabeled"))),
                None => return Err(Error::invalid(format!("{side} row {i} out of range"))),
            }
        }
    }
    if let Some(&i) = unlabeled_rows.iter().find(|&&i| i >= ds.n_rows()) {
        return Err(Error::invalid(format!("unlabeled row {i} out of range")));
    }
    Ok(())
}

/// Location/scale of SAE outputs on the training rows. A unit that is constant on the
/// training rows keeps scale 1.
fn fit_output_scaling(h: &Array2<f64>) -> StandardizationParams<f64> {
    let n = h.nrows() as f64;
    let means = column_means(h.view());
    let stds = Array1::from_iter(h.columns().into_iter().zip(means.iter()).map(|(c, &m)| {
        let ss: f64 = c.iter().map(|&v| (v - m) * (v - m)).sum();
        let sd = if n > 1.0 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
        if sd > 1e-12 {
            sd
        } else {
            1.0
        }
    }));
    StandardizationParams { means, stds }
}

fn stack_rows(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if b.nrows() == 0 {
        return Ok(a.to_owned());
    }
    concatenate(Axis(0), &[a, b]).map_err(|e| Error::dim(e.to_string()))
}

/// Index of the best score; ties keep the earlier candidate.
fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

struct TrainData<'a> {
    x: &'a Array2<f64>,
    y: &'a [Label],
    folds: &'a [Vec<usize>],
}

fn fit_sae(data: &TrainData<'_>, x_unlabeled: &Array2<f64>, cfg: &ExperimentConfig, seed: u64) -> Result<(FittedSae, Vec<usize>)> {
    let p = data.x.ncols();
    let structures: Vec<Vec<usize>> = if cfg.sae_structure_search {
        SAE_STRUCTURE_CANDIDATES
            .iter()
            .filter(|d| d[0] < p)
            .map(|d| d.to_vec())
            .collect()
    } else {
        vec![cfg.sae_dims.clone()]
    };
    if structures.is_empty() {
        return Err(Error::invalid(format!("no SAE structure fits {p} input features")));
    }
    let base = TrainConfig {
        learning_rate: cfg.sae_train.learning_rate,
        iterations: cfg.sae_train.iterations,
        l2: 0.0,
        seed,
    };
    let with_l2 = |l2: f64| TrainConfig { l2, ..base };
    let n_l2 = cfg.l2_grid.len();
    let (dims, l2) = if structures.len() == 1 && n_l2 == 1 {
        (structures[0].clone(), cfg.l2_grid[0])
    } else {
        let mut scores = vec![0.0; structures.len() * n_l2];
        for (f, val) in data.folds.iter().enumerate() {
            let tr = train_rows_excluding(data.folds, f);
            let xt = rows_of(data.x, &tr);
            let yt = labels_of(data.y, &tr);
            let xv = rows_of(data.x, val);
            let yv = labels_of(data.y, val);
            let pre = stack_rows(xt.view(), x_unlabeled.view())?;
            for (s, dims) in structures.iter().enumerate() {
                let layers = sae_pretrain(pre.view(), dims, &base)?;
                for (l, &l2) in cfg.l2_grid.iter().enumerate() {
                    let model = fine_tune(layers.clone(), xt.view(), &yt, &with_l2(l2))?;
                    scores[s * n_l2 + l] += accuracy(&sae_predict(&model, xv.view())?, &yv)? / data.folds.len() as f64;
                }
            }
        }
        let best = argmax_first(&scores);
        (structures[best / n_l2].clone(), cfg.l2_grid[best % n_l2])
    };
    let pre = stack_rows(data.x.view(), x_unlabeled.view())?;
    let layers = sae_pretrain(pre.view(), &dims, &base)?;
    let model = fine_tune(layers, data.x.view(), data.y, &with_l2(l2))?;
    let scaling = if cfg.scale_sae_features {
        Some(fit_output_scaling(&sae_features(&model, data.x.view())?))
    } else {
        None
    };
    Ok((FittedSae { model, scaling, l2 }, dims))
}

fn select_lasso(data: &TrainData<'_>, cfg: &ExperimentConfig) -> Result<(Vec<usize>, f64)> {
    let y = Array1::from(signed_labels::<f64>(data.y)?);
    let xc = data.x - &column_means(data.x.view());
    let yc = &y - y.mean().unwrap_or(0.0);
    let path = lambda_path(xc.view(), yc.view(), cfg.lambda_count, cfg.lambda_ratio)?;
    let chosen = lasso_cv(data.x.view(), data.y, data.folds, &path)?;
    let fits = lasso_fit_centered_path(data.x.view(), y.view(), &path, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let start = path.iter().position(|&l| l == chosen).unwrap_or(0);
    // an empty support is useless to the SVM: move down the path to the first non-empty one
    for k in start..path.len() {
        let cols = selected_features(&fits[k].fit, DEFAULT_SELECTION_EPS);
        if !cols.is_empty() {
            return Ok((cols, path[k]));
        }
    }
    Err(Error::invalid("lasso selected no feature anywhere on the path"))
}

fn select_ttest(data: &TrainData<'_>, cfg: &ExperimentConfig, inner: &SvmClassifier<f64>) -> Result<(Vec<usize>, usize)> {
    let p = data.x.ncols();
    let mut cands: Vec<usize> = cfg.m_grid.iter().copied().filter(|&m| m <= p).collect();
    cands.push(p);
    cands.sort_unstable();
    cands.dedup();
    let m = ttest_cv(data.x.view(), data.y, data.folds, &cands, inner)?;
    let stats = two_sample_t_matrix(data.x.view(), data.y, None)?;
    Ok((select_top_m(&stats, m)?, m))
}

fn fit_pca_reduction(x: ArrayView2<'_, f64>, y: &[Label], r: usize, ranking: ComponentRanking) -> Result<PcaModel<f64>> {
    match ranking {
        ComponentRanking::Variance => pca_fit(x, r),
        ComponentRanking::Discriminatory => {
            let full = pca_fit(x, x.ncols().min(x.nrows() - 1))?;
            select_components_by_power_matrix(&full, x, y, r)
        }
    }
}

fn select_pca(data: &TrainData<'_>, cfg: &ExperimentConfig, inner: &SvmClassifier<f64>) -> Result<(PcaModel<f64>, usize)> {
    let p = data.x.ncols();
    let smallest_fold_train = (0..data.folds.len())
        .map(|f| data.x.nrows() - data.folds[f].len())
        .min()
        .unwrap_or(data.x.nrows());
    let r_cap = p.min(smallest_fold_train.saturating_sub(1)).max(1);
    let mut grid: Vec<usize> = cfg.pc_grid.iter().copied().filter(|&r| r <= r_cap).collect();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() {
        grid.push(r_cap);
    }
    let r = if grid.len() == 1 {
        grid[0]
    } else {
        let r_top = grid[grid.len() - 1];
        let mut scores = vec![0.0; grid.len()];
        for (f, val) in data.folds.iter().enumerate() {
            let tr = train_rows_excluding(data.folds, f);
            let xt = rows_of(data.x, &tr);
            let yt = labels_of(data.y, &tr);
            let xv = rows_of(data.x, val);
            let yv = labels_of(data.y, val);
            // variance ranking nests, so one fit serves every r
            let nested = match cfg.pca_ranking {
                ComponentRanking::Variance => Some(pca_fit(xt.view(), r_top)?),
                ComponentRanking::Discriminatory => None,
            };
            for (i, &r) in grid.iter().enumerate() {
                let model = match &nested {
                    Some(m) => PcaModel {
                        mean: m.mean.clone(),
                        components: m.components.slice(ndarray::s![.., ..r]).to_owned(),
                        variances: m.variances.slice(ndarray::s![..r]).to_owned(),
                        ranking: m.ranking,
                    },
                    None => fit_pca_reduction(xt.view(), &yt, r, cfg.pca_ranking)?,
                };
                let st = pca_transform(&model, xt.view())?;
                let sv = pca_transform(&model, xv.view())?;
                let pred = inner.fit_predict(st.view(), &yt, sv.view())?;
                scores[i] += accuracy(&pred, &yv)? / data.folds.len() as f64;
            }
        }
        grid[argmax_first(&scores)]
    };
    Ok((fit_pca_reduction(data.x.view(), data.y, r, cfg.pca_ranking)?, r))
}

/// Runs one pipeline on one split and returns its test accuracy with every fitted piece.
///
/// Only `split.train` rows (and, for semi-supervised methods, `unlabeled_rows`) are
/// seen by any fitting step; `split.test` rows are only transformed and scored.
pub fn run_pipeline(
    ds: &Dataset<f64>,
    spec: PipelineSpec,
    split: &SplitIndices,
    unlabeled_rows: &[usize],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<PipelineRun> {
    run_pipeline_cached(ds, spec, split, unlabeled_rows, cfg, seed, &mut SaeCache::default())
}

pub(crate) fn run_pipeline_cached(
    ds: &Dataset<f64>,
    spec: PipelineSpec,
    split: &SplitIndices,
    unlabeled_rows: &[usize],
    cfg: &ExperimentConfig,
    seed: u64,
    cache: &mut SaeCache,
) -> Result<PipelineRun> {
    cfg.validate()?;
    check_split(ds, split, unlabeled_rows)?;
    let standardization = standardize_fit(ds, &split.train).or_else(stage("standardize"))?;
    let x_raw = ds.features();
    let xtr = standardization
        .apply_matrix(x_raw.select(Axis(0), &split.train).view())
        .or_else(stage("standardize"))?;
    let ytr = labels_of(ds.labels(), &split.train);
    let train_ds = Dataset::new(xtr.clone(), ytr.clone(), ds.feature_names().to_vec())?;
    let all_train: Vec<usize> = (0..xtr.nrows()).collect();
    let folds = kfold(&all_train, &train_ds, cfg.k, seed.wrapping_add(FOLD_SEED_OFFSET)).or_else(stage("folds"))?;
    let data = TrainData {
        x: &xtr,
        y: &ytr,
        folds: &folds,
    };

    let mut hyper = Hyperparameters {
        c: 0.0,
        lambda: None,
        m: None,
        n_pcs: None,
        l2: None,
        sae_dims: None,
    };
    let sae = if spec.method().uses_sae() {
        let semi = spec.method().is_semi();
        let slot = if semi { &mut cache.semi } else { &mut cache.supervised };
        if slot.is_none() {
            let x_un = if semi {
                standardization
                    .apply_matrix(x_raw.select(Axis(0), unlabeled_rows).view())
                    .or_else(stage("standardize"))?
            } else {
                Array2::zeros((0, xtr.ncols()))
            };
            *slot = Some(fit_sae(&data, &x_un, cfg, seed.wrapping_add(SAE_SEED_OFFSET)).or_else(stage("sae"))?);
        }
        let (fitted, dims) = slot.clone().expect("slot filled above");
        hyper.l2 = Some(fitted.l2);
        hyper.sae_dims = Some(dims);
        Some(fitted)
    } else {
        None
    };

    let mut map = FeatureMap {
        standardization,
        keep_raw: spec.method().uses_raw(),
        sae,
        reduction: Reduction::All,
    };
    let base = map.base_features(xtr.view()).or_else(stage("sae"))?;
    let base_data = TrainData {
        x: &base,
        y: &ytr,
        folds: &folds,
    };
    let svm_base = SvmParams {
        c: cfg.inner_c,
        tol: cfg.svm_tol,
        max_epochs: cfg.svm_max_epochs,
        solver: SvmSolver::default(),
    };
    let inner = SvmClassifier { params: svm_base };
    map.reduction = match spec.selector() {
        Selector::None => Reduction::All,
        Selector::Lasso => {
            let (cols, lambda) = select_lasso(&base_data, cfg).or_else(stage("lasso"))?;
            hyper.lambda = Some(lambda);
            Reduction::Columns(cols)
        }
        Selector::Ttest => {
            let (cols, m) = select_ttest(&base_data, cfg, &inner).or_else(stage("ttest"))?;
            hyper.m = Some(m);
            Reduction::Columns(cols)
        }
        Selector::Pca => {
            let (model, r) = select_pca(&base_data, cfg, &inner).or_else(stage("pca"))?;
            hyper.n_pcs = Some(r);
            Reduction::Pca(model)
        }
    };
    let ftr = map.reduction.apply(base).or_else(stage("features"))?;
    let c = svm_cv_with(ftr.view(), &ytr, &folds, &cfg.c_grid, &svm_base).or_else(stage("svm"))?;
    hyper.c = c;
    let svm = svm_train_with(ftr.view(), &ytr, &SvmParams { c, ..svm_base }).or_else(stage("svm"))?;

    let fte = map
        .transform(x_raw.select(Axis(0), &split.test).view())
        .or_else(stage("features"))?;
    let yte = labels_of(ds.labels(), &split.test);
    let acc = accuracy(&svm_predict(&svm, fte.view()).or_else(stage("svm"))?, &yte)?;
    Ok(PipelineRun {
        spec,
        accuracy: acc,
        feature_map: map,
        svm,
        hyper,
    })
}
