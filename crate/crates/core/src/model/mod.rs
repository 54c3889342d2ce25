//! Shared encoder and prediction network with vanilla, multi-softmax and
//! attention-weighted multi-softmax joints.

mod combine;
mod config;
mod grid;
mod infer;
pub mod network;
mod params;

pub use combine::{combine_log, combine_posteriors};
pub use config::{Architecture, AttentionConfig, LookAhead, ModelConfig, ModelSizes};
pub use grid::{AttentionTrajectory, PosteriorGrid};
pub use infer::{AttentionCache, EncoderState, FrameCtx, Inference, InferenceOptions, PredState, Weighting};
pub use params::{joint_prefix, param_manifest, ParamSpec, ParamStore};

use crate::corpus::Utterance;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Fresh model with uniform fan-in initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ParamStore::init(&config, seed);
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        params.check_against(&config)?;
        Ok(Self { config, params })
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    pub fn inference(&self, options: InferenceOptions) -> Result<Inference<'_>> {
        Inference::new(self, options)
    }

    /// Grid over the utterance's reference labels with default options.
    pub fn posterior_grid(&self, utt: &Utterance) -> Result<(PosteriorGrid, Option<AttentionTrajectory>)> {
        self.inference(InferenceOptions::default())?
            .posterior_grid(&utt.features, &utt.labels)
    }

    /// Copies every parameter that `other` also has under the same name
    /// and shape; returns how many were copied.
    pub fn copy_shared_from(&mut self, other: &Model) -> usize {
        let mut copied = 0;
        for (name, t) in other.params.iter() {
            if let Ok(dst) = self.params.get_mut(name) {
                if dst.shape() == t.shape() {
                    *dst = t.clone();
                    copied += 1;
                }
            }
        }
        copied
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_combined, build_symbol_table, default_graphemes, CombinedTable, Lang};
    use crate::numerics::{ParamRng, Tape, Tensor};

    fn table() -> CombinedTable {
        let a = build_symbol_table(default_graphemes(Lang::A, 3), Lang::A).unwrap();
        let b = build_symbol_table(default_graphemes(Lang::B, 3), Lang::B).unwrap();
        build_combined(a, b).unwrap()
    }

    fn sizes(look_ahead: LookAhead) -> ModelSizes {
        ModelSizes {
            encoder_layers: 2,
            encoder_hidden: 6,
            prediction_layers: 1,
            prediction_hidden: 5,
            joint_hidden: 7,
            attention: AttentionConfig {
                key_dim: 4,
                ffn_hidden: 3,
                look_ahead,
            },
        }
    }

    fn model(arch: Architecture, seed: u64) -> Model {
        let cfg = ModelConfig::new(arch, 4, &sizes(LookAhead::Frames(2)), table());
        Model::new(cfg, seed).unwrap()
    }

    fn features(frames: usize, seed: u64) -> Tensor {
        let t = ParamRng::new(seed).uniform(&[frames * 4], 1.0);
        Tensor::matrix(frames, 4, t.into_data()).unwrap()
    }

    fn zero(m: &mut Model) {
        for t in m.params.tensors_mut() {
            t.data_mut().fill(0.0);
        }
    }

    const ARCHS: [Architecture; 3] = [
        Architecture::Vanilla,
        Architecture::MultiSoftmax,
        Architecture::MultiSoftmaxAttn,
    ];

    #[test]
    fn encoder_is_causal() {
        let m = model(Architecture::MultiSoftmaxAttn, 1);
        let inf = m.inference(InferenceOptions::default()).unwrap();
        let x = features(10, 2);
        let full = inf.encode(&x).unwrap();
        let short = Tensor::matrix(5, 4, x.data()[..20].to_vec()).unwrap();
        assert_eq!(inf.encode(&short).unwrap(), full[..5].to_vec());
        assert_eq!(inf.encode(&Tensor::matrix(1, 4, x.data()[..4].to_vec()).unwrap()).unwrap().len(), 1);
    }

    #[test]
    fn zero_model_zero_input_gives_zero_encoding() {
        let mut m = model(Architecture::Vanilla, 1);
        zero(&mut m);
        let inf = m.inference(InferenceOptions::default()).unwrap();
        let h = inf.encode(&Tensor::zeros(&[3, 4])).unwrap();
        assert!(h.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn encoder_rejects_wrong_dim() {
        let m = model(Architecture::Vanilla, 1);
        let inf = m.inference(InferenceOptions::default()).unwrap();
        assert!(inf.encode(&Tensor::zeros(&[3, 5])).is_err());
    }

    #[test]
    fn prediction_prefix_property_and_blank_rejection() {
        let m = model(Architecture::MultiSoftmax, 3);
        let inf = m.inference(InferenceOptions::default()).unwrap();
        assert_eq!(inf.predict(&[]).unwrap().len(), 1);
        let a = inf.predict(&[0, 4, 2, 7]).unwrap();
        let b = inf.predict(&[0, 4, 5]).unwrap();
        assert_eq!(a[..3], b[..3]);
        assert_ne!(a[3], b[3]);
        assert!(inf.predict(&[1, m.config.table.blank()]).is_err());
    }

    #[test]
    fn joints_check_architecture_and_normalize() {
        let van = model(Architecture::Vanilla, 4);
        let ms = model(Architecture::MultiSoftmax, 4);
        let (iv, im) = (
            van.inference(InferenceOptions::default()).unwrap(),
            ms.inference(InferenceOptions::default()).unwrap(),
        );
        let (he, hp) = (vec![0.3; 6], vec![-0.2; 5]);
        let out = iv.joint_vanilla(&he, &hp).unwrap();
        assert_eq!(out.len(), van.config.table.len());
        assert!((out.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(iv.joint_language(&he, &hp, Lang::A).is_err());
        assert!(im.joint_vanilla(&he, &hp).is_err());
        for lang in Lang::BOTH {
            let out = im.joint_language(&he, &hp, lang).unwrap();
            assert_eq!(out.len(), ms.config.table.table(lang).len());
            assert!((out.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_joint_is_uniform() {
        let mut m = model(Architecture::Vanilla, 4);
        zero(&mut m);
        let inf = m.inference(InferenceOptions::default()).unwrap();
        let out = inf.joint_vanilla(&[1.0; 6], &[1.0; 5]).unwrap();
        let k = m.config.table.len() as f64;
        assert!(out.iter().all(|v| (v - (1.0 / k).ln()).abs() < 1e-15));
    }

    #[test]
    fn language_joints_have_separate_parameters() {
        let m = model(Architecture::MultiSoftmax, 5);
        let mut m2 = m.clone();
        for (name, t) in m.params.iter() {
            if name.starts_with("joint_B.") {
                *m2.params.get_mut(name).unwrap() = t.map(|v| v + 0.37);
            }
        }
        let (i1, i2) = (
            m.inference(InferenceOptions::default()).unwrap(),
            m2.inference(InferenceOptions::default()).unwrap(),
        );
        let (he, hp) = (vec![0.1; 6], vec![0.4; 5]);
        assert_eq!(
            i1.joint_language(&he, &hp, Lang::A).unwrap(),
            i2.joint_language(&he, &hp, Lang::A).unwrap()
        );
        assert_ne!(
            i1.joint_language(&he, &hp, Lang::B).unwrap(),
            i2.joint_language(&he, &hp, Lang::B).unwrap()
        );
    }

    #[test]
    fn attention_weights_are_a_distribution_and_respect_look_ahead() {
        let m = model(Architecture::MultiSoftmaxAttn, 6);
        let inf = m.inference(InferenceOptions::default()).unwrap();
        let h = inf.encode(&features(12, 7)).unwrap();
        for l in [0, 3] {
            let la = LookAhead::Frames(l);
            for t in 0..12 {
                let (a, b) = inf.attention_weights(&h, t, la).unwrap();
                assert!((a + b - 1.0).abs() < 1e-9 && (0.0..=1.0).contains(&a));
                let mut h2 = h.clone();
                for row in h2.iter_mut().skip(t + l + 1) {
                    row.iter_mut().for_each(|v| *v = -*v * 3.0 + 1.0);
                }
                assert_eq!(inf.attention_weights(&h2, t, la).unwrap(), (a, b));
            }
        }
        assert!(inf.attention_weights(&h, 12, LookAhead::Infinite).is_err());
    }

    #[test]
    fn zero_ffn_gives_even_weights() {
        let mut m = model(Architecture::MultiSoftmaxAttn, 8);
        for name in ["attention.ffn_w1", "attention.ffn_b1", "attention.ffn_w2", "attention.ffn_b2"] {
            m.params.get_mut(name).unwrap().data_mut().fill(0.0);
        }
        let utt = crate::corpus::Utterance {
            id: "u".into(),
            condition: crate::corpus::Condition::Mixed,
            seed: 0,
            words: vec![],
            labels: vec![0, 5],
            features: features(6, 9),
        };
        let (_, traj) = m.posterior_grid(&utt).unwrap();
        assert!(traj.unwrap().weights.iter().all(|w| *w == [0.5, 0.5]));
    }

    #[test]
    fn grids_are_normalized_for_every_architecture() {
        for arch in ARCHS {
            let m = model(arch, 10);
            let inf = m.inference(InferenceOptions::default()).unwrap();
            let (g, traj) = inf.posterior_grid(&features(7, 11), &[1, 6, 3]).unwrap();
            assert_eq!((g.frames(), g.positions(), g.symbols()), (7, 4, m.config.table.len()));
            assert!(g.max_normalization_error() < 1e-9);
            assert_eq!(traj.is_some(), arch == Architecture::MultiSoftmaxAttn);
        }
    }

    #[test]
    fn tied_zero_params_give_uniform_grids() {
        for arch in [Architecture::Vanilla, Architecture::MultiSoftmax] {
            let mut m = model(arch, 12);
            zero(&mut m);
            let inf = m.inference(InferenceOptions::default()).unwrap();
            let (g, _) = inf.posterior_grid(&features(3, 1), &[2]).unwrap();
            let k = m.config.table.len();
            let expected: Vec<f64> = if arch == Architecture::Vanilla {
                vec![(1.0 / k as f64).ln(); k]
            } else {
                // each language table is uniform; blank pools both halves
                let n = m.config.table.table(Lang::A).len() as f64;
                let mut v = vec![(0.5 / n).ln(); k];
                v[k - 1] = (1.0 / n).ln();
                v
            };
            for &(t, u) in &[(0, 0), (2, 1)] {
                for (x, y) in g.slice(t, u).iter().zip(&expected) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn attention_frozen_at_half_matches_multisoftmax() {
        let attn = model(Architecture::MultiSoftmaxAttn, 13);
        let mut ms = Model::new(attn.config.with_architecture(Architecture::MultiSoftmax, None), 99).unwrap();
        ms.copy_shared_from(&attn);
        let x = features(6, 14);
        let frozen = InferenceOptions {
            weighting: Weighting::Fixed(0.5, 0.5),
            ..Default::default()
        };
        let (g1, _) = attn.inference(frozen).unwrap().posterior_grid(&x, &[0, 7]).unwrap();
        let (g2, _) = ms.inference(InferenceOptions::default()).unwrap().posterior_grid(&x, &[0, 7]).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn forced_a_weights_reproduce_language_a_joint() {
        let m = model(Architecture::MultiSoftmaxAttn, 15);
        let forced = InferenceOptions {
            weighting: Weighting::Fixed(1.0, 0.0),
            ..Default::default()
        };
        let inf = m.inference(forced).unwrap();
        let x = features(5, 16);
        let labels = [0, 2];
        let (g, _) = inf.posterior_grid(&x, &labels).unwrap();
        let h = inf.encode(&x).unwrap();
        let preds = inf.predict(&labels).unwrap();
        let a_idx = m.config.table.lang_to_combined(Lang::A);
        for t in 0..5 {
            for (u, p) in preds.iter().enumerate() {
                let mono = inf.joint_language(&h[t], p.output(), Lang::A).unwrap();
                for (local, &c) in a_idx.iter().enumerate() {
                    assert!((g.get(t, u, c) - mono[local]).abs() < 1e-14);
                }
                for c in m.config.table.segment(Lang::B) {
                    assert_eq!(g.get(t, u, c), f64::NEG_INFINITY);
                }
            }
        }
    }

    #[test]
    fn tape_grid_matches_inference_grid() {
        for arch in ARCHS {
            let m = model(arch, 17);
            let x = features(8, 18);
            let labels = [3, 0, 9];
            let (g, traj) = m
                .inference(InferenceOptions::default())
                .unwrap()
                .posterior_grid(&x, &labels)
                .unwrap();
            let mut tape = Tape::new();
            let bound = network::Bound::new(&mut tape, &m.params);
            let tg = network::grid_tape(&mut tape, &m, &bound, &x, &labels, Weighting::Model).unwrap();
            let worst = tape
                .value(tg.grid)
                .data()
                .iter()
                .zip(g.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-12, "{arch:?}: {worst}");
            if let (Some(lw), Some(traj)) = (tg.log_weights, traj) {
                for (t, w) in traj.weights.iter().enumerate() {
                    assert!((tape.value(lw).get(t, 0).exp() - w[0]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn manifest_matches_store() {
        for arch in ARCHS {
            let m = model(arch, 1);
            m.params.check_against(&m.config).unwrap();
            let has_attn = m.params.position("attention.query").is_some();
            assert_eq!(has_attn, arch == Architecture::MultiSoftmaxAttn);
        }
    }
}
