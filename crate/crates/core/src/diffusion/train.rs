use serde::{Deserialize, Serialize};

use crate::diffusion::checkpoint::Checkpoint;
use crate::diffusion::loss::{loss_and_grads, LossBatch};
use crate::diffusion::schedule::{build_vp_schedule, NoiseSchedule};
use crate::error::{Error, Result};
use crate::missingness::{apply_mask, rho_stats, MaskMatrix};
use crate::network::{NetworkConfig, ScoreNetwork};
use crate::numerics::{AdamState, LrSchedule, Rng, Tensor, DEFAULT_LR};
use crate::tabular::{encode, fit_encoder, Cell, Kind, Table};

/// How incomplete rows are handled before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessMode {
    /// Train on observed cells only through the masked loss.
    Missdiff,
    /// Fill NA with the column mean (mode for categoricals), then train unmasked.
    MeanImpute,
    /// Drop incomplete rows, then train unmasked.
    RowDelete,
}

impl PreprocessMode {
    pub fn name(self) -> &'static str {
        match self {
            PreprocessMode::Missdiff => "missdiff",
            PreprocessMode::MeanImpute => "mean_impute",
            PreprocessMode::RowDelete => "row_delete",
        }
    }
}

impl std::str::FromStr for PreprocessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "missdiff" => Ok(PreprocessMode::Missdiff),
            "mean_impute" | "diff_mean" => Ok(PreprocessMode::MeanImpute),
            "row_delete" | "diff_delete" => Ok(PreprocessMode::RowDelete),
            other => Err(Error::InvalidConfig(format!("unknown preprocessing mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub timesteps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mode: PreprocessMode,
    pub seed: u64,
    pub channels: usize,
    pub embed_dim: usize,
    pub num_blocks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            timesteps: 100,
            beta_min: 1e-4,
            beta_max: 0.5,
            epochs: 250,
            batch_size: 64,
            learning_rate: DEFAULT_LR,
            mode: PreprocessMode::Missdiff,
            seed: 0,
            channels: 64,
            embed_dim: 128,
            num_blocks: 4,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        build_vp_schedule(self.timesteps, self.beta_min, self.beta_max)
    }

    pub fn network(&self, input_dim: usize) -> NetworkConfig {
        NetworkConfig {
            input_dim,
            channels: self.channels,
            embed_dim: self.embed_dim,
            num_blocks: self.num_blocks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        self.schedule().map(|_| ())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: ScoreNetwork,
    pub schedule: NoiseSchedule,
    /// Mean minibatch loss per epoch.
    pub loss_trace: Vec<f32>,
}

/// Trains on an encoded matrix with an expanded mask (1 = observed).
///
/// Network initialisation uses `rng.split(0)`; row shuffles and the per-row
/// `(t, ε)` draws consume `rng` itself, batch by batch.
pub fn train_encoded(x: &Tensor, mask: &Tensor, config: &TrainConfig, rng: &mut Rng) -> Result<TrainedModel> {
    config.validate()?;
    if x.shape() != mask.shape() || x.shape().len() != 2 {
        return Err(Error::shape("train inputs", x.shape(), mask.shape()));
    }
    let (n, width) = (x.rows(), x.cols());
    if n == 0 {
        return Err(Error::InvalidConfig("no training rows".into()));
    }
    let schedule = config.schedule()?;
    let mut network = ScoreNetwork::new(config.network(width), &mut rng.split(0))?;
    let mut adam = AdamState::new(&network.params.tensors());
    let lr_schedule = LrSchedule::multi_step(config.learning_rate, config.epochs);
    let horizon = schedule.horizon();

    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = lr_schedule.lr_at(epoch)? as f32;
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let b = chunk.len();
            let mut xb = Vec::with_capacity(b * width);
            let mut mb = Vec::with_capacity(b * width);
            for &i in chunk {
                xb.extend_from_slice(x.row(i));
                mb.extend_from_slice(mask.row(i));
            }
            let xb = Tensor::new(vec![b, width], xb)?;
            let mb = Tensor::new(vec![b, width], mb)?;
            let steps: Vec<usize> = (0..b).map(|_| rng.int_inclusive(1, horizon)).collect();
            let eps = rng.normal_tensor(&[b, width]);

            let batch = LossBatch {
                x0: &xb,
                steps: &steps,
                eps: &eps,
            };
            let (value, grads) = loss_and_grads(&network, batch, Some(&mb), &schedule)?;
            adam.step(&mut network.params.tensors_mut(), &grads, lr)?;
            epoch_loss += value as f64;
            batches += 1;
        }
        loss_trace.push((epoch_loss / batches as f64) as f32);
    }
    Ok(TrainedModel {
        network,
        schedule,
        loss_trace,
    })
}

/// Fills NA cells with the observed column mean, or the most frequent
/// category (earliest first appearance on ties).
pub fn mean_impute(table: &Table) -> Result<Table> {
    let fills = (0..table.n_cols())
        .map(|j| match table.schema().columns[j].kind {
            Kind::Continuous => {
                let v = table.numbers(j);
                if v.is_empty() {
                    return Err(Error::Schema(format!(
                        "column {:?} has no observed cells to impute from",
                        table.schema().columns[j].name
                    )));
                }
                Ok(Cell::Number(v.iter().sum::<f64>() / v.len() as f64))
            }
            Kind::Categorical => {
                let mut counts: Vec<(&str, usize)> = Vec::new();
                for c in table.categories(j) {
                    match counts.iter_mut().find(|(k, _)| *k == c) {
                        Some((_, n)) => *n += 1,
                        None => counts.push((c, 1)),
                    }
                }
                let best = counts
                    .iter()
                    .fold(None, |best: Option<(&str, usize)>, &(k, n)| match best {
                        Some((_, bn)) if bn >= n => best,
                        _ => Some((k, n)),
                    })
                    .ok_or_else(|| {
                        Error::Schema(format!(
                            "column {:?} has no observed cells to impute from",
                            table.schema().columns[j].name
                        ))
                    })?;
                Ok(Cell::Category(best.0.to_string()))
            }
        })
        .collect::<Result<Vec<Cell>>>()?;
    let rows = table
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .zip(&fills)
                .map(|(c, f)| if c.is_na() { f.clone() } else { c.clone() })
                .collect()
        })
        .collect();
    Table::new(table.schema().clone(), rows)
}

/// Keeps only rows without NA cells.
pub fn delete_incomplete_rows(table: &Table) -> Result<Table> {
    let keep: Vec<usize> = (0..table.n_rows())
        .filter(|&i| table.rows()[i].iter().all(|c| !c.is_na()))
        .collect();
    if keep.is_empty() {
        return Err(Error::NoCompleteRows);
    }
    Ok(table.select_rows(&keep))
}

/// Trains a model on an incomplete table.
///
/// A cell counts as observed when it is not NA and the mask marks it
/// observed. The random stream is `Rng::new(config.seed)`.
pub fn train(table: &Table, mask: &MaskMatrix, config: &TrainConfig) -> Result<Checkpoint> {
    let observed = apply_mask(table, mask)?;
    let effective = MaskMatrix::from_table(&observed);
    let prepared = match config.mode {
        PreprocessMode::Missdiff => observed,
        PreprocessMode::MeanImpute => mean_impute(&observed)?,
        PreprocessMode::RowDelete => delete_incomplete_rows(&observed)?,
    };
    let schema = fit_encoder(&prepared, prepared.schema())?;
    let (encoded, expanded) = encode(&prepared, &schema)?;
    let loss_mask = match config.mode {
        PreprocessMode::Missdiff => expanded,
        _ => Tensor::ones(encoded.matrix.shape()),
    };
    let mut rng = Rng::new(config.seed);
    let trained = train_encoded(&encoded.matrix, &loss_mask, config, &mut rng)?;
    Ok(Checkpoint {
        train_config: config.clone(),
        schema,
        network: trained.network,
        schedule: trained.schedule,
        loss_trace: trained.loss_trace,
        rho: rho_stats(&effective),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::missingness::mask_mcar_independent;
    use crate::tabular::generate_bayesian_network;

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            channels: 16,
            embed_dim: 16,
            num_blocks: 2,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn mean_impute_fills_mean_and_mode() {
        let t = generate_bayesian_network(200, &mut Rng::new(1)).unwrap();
        let m = mask_mcar_independent(200, 5, 0.3, &mut Rng::new(2)).unwrap();
        let obs = apply_mask(&t, &m).unwrap();
        let filled = mean_impute(&obs).unwrap();
        assert!(filled.is_complete());
        let v = obs.numbers(0);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let i = (0..200).find(|&i| obs.cell(i, 0).is_na()).unwrap();
        assert_eq!(filled.cell(i, 0), &Cell::Number(mean));
        let k = (0..200).find(|&i| obs.cell(i, 3).is_na()).unwrap();
        assert_eq!(filled.cell(k, 3), &Cell::Category("2".into()));
    }

    #[test]
    fn row_delete_without_survivors_fails() {
        let t = generate_bayesian_network(5, &mut Rng::new(1)).unwrap();
        let mut m = MaskMatrix::all_observed(5, 5);
        for i in 0..5 {
            m.set(i, i % 5, false);
        }
        let err = train(&t, &m, &TrainConfig { mode: PreprocessMode::RowDelete, ..quick() });
        assert!(matches!(err, Err(Error::NoCompleteRows)));
    }

    #[test]
    fn deterministic_given_seed() {
        let t = generate_bayesian_network(100, &mut Rng::new(3)).unwrap();
        let m = mask_mcar_independent(100, 5, 0.2, &mut Rng::new(4)).unwrap();
        let a = train(&t, &m, &quick()).unwrap();
        let b = train(&t, &m, &quick()).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    }

    #[test]
    fn modes_coincide_on_complete_data() {
        let t = generate_bayesian_network(100, &mut Rng::new(3)).unwrap();
        let m = MaskMatrix::all_observed(100, 5);
        let a = train(&t, &m, &quick()).unwrap();
        let b = train(&t, &m, &TrainConfig { mode: PreprocessMode::MeanImpute, ..quick() }).unwrap();
        let c = train(&t, &m, &TrainConfig { mode: PreprocessMode::RowDelete, ..quick() }).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.network, b.network);
        assert_eq!(a.network, c.network);
    }

    #[test]
    fn loss_decreases_on_gaussian_data() {
        let mut rng = Rng::new(8);
        let x = rng.normal_tensor(&[2000, 1]);
        let mask = Tensor::ones(&[2000, 1]);
        let config = TrainConfig { epochs: 100, ..TrainConfig::default() };
        let trained = train_encoded(&x, &mask, &config, &mut Rng::new(9)).unwrap();
        let first = trained.loss_trace[0];
        let last = *trained.loss_trace.last().unwrap();
        assert!(last < first, "loss {first} -> {last}");
    }
}
