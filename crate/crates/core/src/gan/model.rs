use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{FeatureLayer, TrainConfig};
use super::features::ClassifierFeatures;
use super::losses::{adv_losses, cross_entropy, generator_adv_loss, info_loss_grad, FeatureStats};
use crate::condvec::{ConditionalVector, FrequencyTable, RowIndex};
use crate::data::{Schema, Table};
use crate::error::{Error, Result};
use crate::neural::{Activation, Adam, DenseNet, OutputHead};
use crate::transform::{ColumnCodec, ModeSlot, TableTransformer};

pub const MODEL_BUNDLE_VERSION: u32 = 1;

/// Mean loss values over one epoch. Components switched off by the
/// configuration are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_adv: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cond: Option<f64>,
    /// Loss of the classifier on real rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

/// A `column=value` condition applied to every synthesized row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedCondition {
    pub column: String,
    pub value: String,
}

impl FromStr for FixedCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('=') {
            Some((c, v)) if !c.trim().is_empty() => Ok(FixedCondition {
                column: c.trim().to_string(),
                value: v.trim().to_string(),
            }),
            _ => Err(Error::InvalidArgument(format!(
                "condition `{s}` is not of the form column=value"
            ))),
        }
    }
}

impl fmt::Display for FixedCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.column, self.value)
    }
}

/// Trained generator, discriminator and classifier with everything needed to
/// synthesize rows.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    config: TrainConfig,
    transformer: TableTransformer,
    frequency: FrequencyTable,
    generator: DenseNet,
    discriminator: DenseNet,
    classifier: Option<DenseNet>,
    history: History,
    train_rows: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    train_rows: usize,
    has_classifier: bool,
}

struct Batch {
    noise: Array2<f64>,
    cond: Array2<f64>,
    real: Array2<f64>,
    /// `(encoded offset, width, local index)` of each row's condition.
    targets: Vec<(usize, usize, usize)>,
}

#[derive(Default)]
struct Sums {
    steps: usize,
    d: f64,
    g: f64,
    info: f64,
    class: f64,
    cond: f64,
    classifier: f64,
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    encoded: Array2<f64>,
    frequency: &'a FrequencyTable,
    index: RowIndex,
    head: OutputHead,
    features: Option<ClassifierFeatures>,
    generator: DenseNet,
    discriminator: DenseNet,
    classifier: Option<DenseNet>,
    g_opt: Adam,
    d_opt: Adam,
    c_opt: Adam,
    rng: ChaCha8Rng,
}

fn with_context(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(what) => Error::Diverged { epoch, what },
        other => other,
    }
}

fn column(values: &Array1<f64>) -> Array2<f64> {
    values.clone().insert_axis(Axis(1))
}

impl<'a> Trainer<'a> {
    fn sample_batch(&mut self) -> Result<Batch> {
        let b = self.config.batch_size;
        let width = self.encoded.ncols();
        let mut cond = Array2::zeros((b, self.frequency.width()));
        let mut real = Array2::zeros((b, width));
        let mut targets = Vec::with_capacity(b);
        for r in 0..b {
            let idx = if self.frequency.width() > 0 {
                let cv = self.frequency.sample(&mut self.rng)?;
                self.frequency.write_bits(&cv, cond.row_mut(r));
                let seg = self.frequency.segments()[cv.segment];
                targets.push((seg.encoded_offset, seg.width, cv.local));
                self.index.draw(&cv, &mut self.rng, 1)?[0]
            } else {
                self.rng.random_range(0..self.encoded.nrows())
            };
            real.row_mut(r).assign(&self.encoded.row(idx));
        }
        let noise = Array2::from_shape_simple_fn((b, self.config.noise_dim), || {
            StandardNormal.sample(&mut self.rng)
        });
        Ok(Batch {
            noise,
            cond,
            real,
            targets,
        })
    }

    fn feature_layer(&self) -> usize {
        let n = self.discriminator.layers().len();
        match self.config.info_layer {
            FeatureLayer::Penultimate => n - 2,
            FeatureLayer::Output => n - 1,
        }
    }

    fn step(&mut self, sums: &mut Sums) -> Result<()> {
        let cfg = self.config;
        let batch = self.sample_batch()?;
        let b = cfg.batch_size;
        let width = self.encoded.ncols();
        let g_input = concatenate![Axis(1), batch.noise, batch.cond];
        let real_in = concatenate![Axis(1), batch.real, batch.cond];

        // discriminator
        let raw = self.generator.infer(&g_input)?;
        let fake = self.head.forward(&raw, &mut self.rng)?.output().clone();
        let fake_in = concatenate![Axis(1), fake, batch.cond];
        let both = concatenate![Axis(0), real_in, fake_in];
        self.discriminator.zero_grad();
        let logits = self.discriminator.forward(&both)?.column(0).to_vec();
        let adv = adv_losses(&logits[..b], &logits[b..])?;
        let upstream = column(&concatenate![Axis(0), adv.d_grad_real, adv.d_grad_fake]);
        self.discriminator.backward(&upstream)?;
        self.d_opt.step_net(&mut self.discriminator)?;
        sums.d += adv.d_loss;

        // generator
        self.generator.zero_grad();
        let raw = self.generator.forward(&g_input)?;
        let cache = self.head.forward(&raw, &mut self.rng)?;
        let fake = cache.output();
        let fake_in = concatenate![Axis(1), *fake, batch.cond];
        self.discriminator.zero_grad();
        let fake_logits = self.discriminator.forward(&fake_in)?.column(0).to_vec();
        let (g_adv, g_grad) = generator_adv_loss(&fake_logits)?;
        sums.g += g_adv;
        let mut injected = Vec::new();
        if cfg.info_loss_on {
            let layer = self.feature_layer();
            let real_stats = FeatureStats::of(&self.discriminator.infer_through(&real_in, layer)?)?;
            let (info, grad) =
                info_loss_grad(&real_stats, self.discriminator.layer_output(layer)?)?;
            sums.info += info;
            injected.push((layer, grad * cfg.lambda_info));
        }
        let injected_refs: Vec<(usize, &Array2<f64>)> =
            injected.iter().map(|(l, g)| (*l, g)).collect();
        let d_input_grad = self
            .discriminator
            .backward_with(Some(&column(&g_grad)), &injected_refs)?;
        let mut fake_grad = d_input_grad.slice(s![.., ..width]).to_owned();

        if let (Some(features), Some(classifier)) = (&self.features, self.classifier.as_mut()) {
            let x = features.forward(fake);
            let labels = features.labels(fake);
            classifier.zero_grad();
            let logits = classifier.forward(&x)?;
            let (loss, grad) = cross_entropy(&logits, &labels)?;
            sums.class += loss;
            let x_grad = classifier.backward(&(grad * cfg.lambda_class))?;
            fake_grad += &features.backward(fake, &x_grad)?;
        }

        let mut raw_grad = self.head.backward(&cache, &fake_grad)?;
        if !batch.targets.is_empty() {
            let (loss, grad) = self.head.cond_loss(&cache, &batch.targets)?;
            sums.cond += loss;
            raw_grad += &(grad * cfg.lambda_cond);
        }
        self.generator.backward(&raw_grad)?;
        self.g_opt.step_net(&mut self.generator)?;

        // classifier on real rows
        if let (Some(features), Some(classifier)) = (&self.features, self.classifier.as_mut()) {
            classifier.zero_grad();
            let x = features.forward(&batch.real);
            let labels = features.labels(&batch.real);
            let logits = classifier.forward(&x)?;
            let (loss, grad) = cross_entropy(&logits, &labels)?;
            sums.classifier += loss;
            classifier.backward(&grad)?;
            self.c_opt.step_net(classifier)?;
        }
        sums.steps += 1;
        Ok(())
    }

    fn record(&self, epoch: usize, sums: &Sums) -> Result<EpochRecord> {
        let n = sums.steps.max(1) as f64;
        let classifier = self.classifier.is_some();
        let rec = EpochRecord {
            epoch,
            d_loss: sums.d / n,
            g_adv: sums.g / n,
            info: self.config.info_loss_on.then_some(sums.info / n),
            class: classifier.then_some(sums.class / n),
            cond: (self.frequency.width() > 0).then_some(sums.cond / n),
            classifier: classifier.then_some(sums.classifier / n),
        };
        let values = [
            ("discriminator loss", Some(rec.d_loss)),
            ("generator adversarial loss", Some(rec.g_adv)),
            ("information loss", rec.info),
            ("classification loss", rec.class),
            ("condition loss", rec.cond),
            ("classifier loss", rec.classifier),
        ];
        for (what, v) in values {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        what: what.to_string(),
                    });
                }
            }
        }
        Ok(rec)
    }
}

impl Synthesizer {
    /// Fits codecs on `table` and trains the networks.
    pub fn fit(table: &Table, schema: &Schema, config: &TrainConfig) -> Result<Self> {
        Self::fit_with_progress(table, schema, config, |_| {})
    }

    /// Like [`fit`](Self::fit), reporting each finished epoch.
    pub fn fit_with_progress(
        table: &Table,
        schema: &Schema,
        config: &TrainConfig,
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<Self> {
        config.validate()?;
        let transformer = TableTransformer::fit(table, schema, &config.codec_config())?;
        let encoded = transformer.encode_table(table)?;
        let frequency = FrequencyTable::build(&encoded, transformer.layout())?;
        let index = RowIndex::build(&encoded, &frequency);
        let width = transformer.layout().width();
        let cond_width = frequency.width();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        let dims = |input: usize, hidden: &[usize], output: usize| {
            let mut d = vec![input];
            d.extend_from_slice(hidden);
            d.push(output);
            d
        };
        let generator = DenseNet::mlp(
            &dims(
                config.noise_dim + cond_width,
                &config.generator_hidden,
                width,
            ),
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        )?;
        let discriminator = DenseNet::mlp(
            &dims(width + cond_width, &config.discriminator_hidden, 1),
            Activation::leaky_relu(),
            Activation::Identity,
            &mut rng,
        )?;
        let features = match (config.classifier_on, schema.target()) {
            (true, Some(target)) => Some(ClassifierFeatures::new(&transformer, &target.name)?),
            (true, None) => {
                log::info!("no target column; training without the classifier");
                None
            }
            (false, _) => None,
        };
        let classifier = match &features {
            Some(f) => Some(DenseNet::mlp(
                &dims(f.width(), &config.classifier_hidden, f.n_classes()),
                Activation::leaky_relu(),
                Activation::Identity,
                &mut rng,
            )?),
            None => None,
        };

        let mut trainer = Trainer {
            config,
            encoded,
            frequency: &frequency,
            index,
            head: OutputHead::new(transformer.layout(), config.temperature)?,
            features,
            generator,
            discriminator,
            classifier,
            g_opt: Adam::new(config.generator_opt),
            d_opt: Adam::new(config.discriminator_opt),
            c_opt: Adam::new(config.classifier_opt),
            rng,
        };
        let steps = (table.n_rows() / config.batch_size).max(1);
        let mut history = History::default();
        for epoch in 1..=config.epochs {
            let mut sums = Sums::default();
            for _ in 0..steps {
                trainer.step(&mut sums).map_err(with_context(epoch))?;
            }
            let rec = trainer.record(epoch, &sums)?;
            log::debug!("epoch {epoch}: {rec:?}");
            on_epoch(&rec);
            history.epochs.push(rec);
        }

        let Trainer {
            mut generator,
            mut discriminator,
            mut classifier,
            ..
        } = trainer;
        generator.clear_cache();
        discriminator.clear_cache();
        if let Some(c) = classifier.as_mut() {
            c.clear_cache();
        }
        Ok(Synthesizer {
            config: config.clone(),
            transformer,
            frequency,
            generator,
            discriminator,
            classifier,
            history,
            train_rows: table.n_rows(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn transformer(&self) -> &TableTransformer {
        &self.transformer
    }

    pub fn frequency(&self) -> &FrequencyTable {
        &self.frequency
    }

    pub fn generator(&self) -> &DenseNet {
        &self.generator
    }

    pub fn discriminator(&self) -> &DenseNet {
        &self.discriminator
    }

    pub fn classifier(&self) -> Option<&DenseNet> {
        self.classifier.as_ref()
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// Number of rows the model was trained on.
    pub fn train_rows(&self) -> usize {
        self.train_rows
    }

    /// Maps a `column=value` condition onto the conditional vector.
    pub fn resolve_condition(&self, condition: &FixedCondition) -> Result<ConditionalVector> {
        let pos = self
            .transformer
            .column_position(&condition.column)
            .ok_or_else(|| Error::UnknownColumn(condition.column.clone()))?;
        let local = match &self.transformer.codecs()[pos] {
            ColumnCodec::Categorical(c) => c.encode(Some(&condition.value))?,
            ColumnCodec::Numeric(c) => {
                let value: f64 = condition.value.parse().map_err(|_| Error::NotNumeric {
                    column: c.name.clone(),
                    token: condition.value.clone(),
                })?;
                c.slots
                    .iter()
                    .position(|s| matches!(s, ModeSlot::Value { value: v } if *v == value))
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "`{}` is not a categorical value of mixed column `{}`",
                            condition.value, c.name
                        ))
                    })?
            }
        };
        self.frequency.condition(pos, local)
    }

    /// Generates `n` rows. Without a fixed condition, each row's condition is
    /// drawn with the observed mode and class frequencies.
    pub fn synthesize(
        &self,
        n: usize,
        condition: Option<&FixedCondition>,
        seed: u64,
    ) -> Result<Table> {
        if n == 0 {
            return Err(Error::InvalidArgument("row count must be positive".into()));
        }
        let fixed = condition.map(|c| self.resolve_condition(c)).transpose()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = OutputHead::new(self.transformer.layout(), self.config.temperature)?;
        let width = self.transformer.layout().width();
        let mut rows = Array2::zeros((n, width));
        let mut start = 0;
        while start < n {
            let b = self.config.batch_size.min(n - start);
            let mut cond = Array2::zeros((b, self.frequency.width()));
            if self.frequency.width() > 0 {
                for r in 0..b {
                    let cv = match fixed {
                        Some(cv) => cv,
                        None => self.frequency.sample_empirical(&mut rng)?,
                    };
                    self.frequency.write_bits(&cv, cond.row_mut(r));
                }
            }
            let noise = Array2::from_shape_simple_fn((b, self.config.noise_dim), || {
                StandardNormal.sample(&mut rng)
            });
            let raw = self.generator.infer(&concatenate![Axis(1), noise, cond])?;
            let mut out = head.forward(&raw, &mut rng)?.output().clone();
            for row in out.outer_iter_mut() {
                self.transformer.harden(row);
            }
            rows.slice_mut(s![start..start + b, ..]).assign(&out);
            start += b;
        }
        self.transformer.decode_matrix(&rows)
    }

    /// Writes the model bundle into `dir`, creating it if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        write(
            "manifest.json",
            serde_json::to_string_pretty(&Manifest {
                version: MODEL_BUNDLE_VERSION,
                train_rows: self.train_rows,
                has_classifier: self.classifier.is_some(),
            })?,
        )?;
        write("config.json", serde_json::to_string_pretty(&self.config)?)?;
        write("codecs.json", self.transformer.to_json()?)?;
        write("frequency.json", serde_json::to_string(&self.frequency)?)?;
        write("history.json", serde_json::to_string_pretty(&self.history)?)?;
        write("generator.json", self.generator.to_json()?)?;
        write("discriminator.json", self.discriminator.to_json()?)?;
        if let Some(c) = &self.classifier {
            write("classifier.json", c.to_json()?)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        let manifest: Manifest = serde_json::from_str(&read("manifest.json")?)?;
        if manifest.version != MODEL_BUNDLE_VERSION {
            return Err(Error::Version {
                found: manifest.version,
                expected: MODEL_BUNDLE_VERSION,
            });
        }
        let config: TrainConfig = serde_json::from_str(&read("config.json")?)?;
        let transformer = TableTransformer::from_json(&read("codecs.json")?)?;
        let frequency: FrequencyTable = serde_json::from_str(&read("frequency.json")?)?;
        let history: History = serde_json::from_str(&read("history.json")?)?;
        let generator = DenseNet::from_json(&read("generator.json")?)?;
        let discriminator = DenseNet::from_json(&read("discriminator.json")?)?;
        let classifier = if manifest.has_classifier {
            Some(DenseNet::from_json(&read("classifier.json")?)?)
        } else {
            None
        };
        let width = transformer.layout().width();
        if generator.output_dim() != width
            || generator.input_dim() != config.noise_dim + frequency.width()
            || discriminator.input_dim() != width + frequency.width()
        {
            return Err(Error::Shape(
                "bundle networks do not match the encoding".into(),
            ));
        }
        Ok(Synthesizer {
            config,
            transformer,
            frequency,
            generator,
            discriminator,
            classifier,
            history,
            train_rows: manifest.train_rows,
        })
    }
}
