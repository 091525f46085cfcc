#![allow(clippy::excessive_precision)]

//! Frozen reference responses of the seeded weight bank. A change here means
//! every downstream number changes too.

use approx::assert_relative_eq;
use rgbt::siamese::{Backbone, BackboneConfig, HeadConfig, ImagePatch, RpnHeads};
use rgbt::tensor::FeatureMap;

fn assert_planes_constant(m: &FeatureMap<f64>) {
    for c in 0..m.channels() {
        let p = m.channel(c);
        assert!(p.iter().all(|&v| v == p[0]), "channel {c} not constant");
    }
}

#[test]
fn zero_patch_embedding_matches_golden_values() {
    let b = Backbone::<f64>::new(BackboneConfig::default()).unwrap();
    let f = b.embed(&ImagePatch::new(FeatureMap::zeros(3, 127, 127)).unwrap()).unwrap();
    let golden = [
        (0.5742405327608537, -9.76150642257988125e2, -4.13525263796898565e-2),
        (0.10609562159737286, 4.61733789577021412e1, -2.08746889305847450e-1),
        (0.7011226477596773, 4.93293950787755080e2, 6.62053809238647095e-1),
    ];
    for (m, (first, sum, c5)) in f.iter().zip(golden) {
        assert_eq!(m.shape(), (32, 15, 15));
        // a blank patch carries no spatial structure
        assert_planes_constant(m);
        assert_relative_eq!(m.get(0, 0, 0), first, max_relative = 1e-12);
        assert_relative_eq!(m.data().iter().sum::<f64>(), sum, max_relative = 1e-12);
        assert_relative_eq!(m.get(5, 7, 7), c5, max_relative = 1e-12);
    }
}

#[test]
fn zero_inputs_give_the_head_bias_pattern() {
    let heads = RpnHeads::<f64>::new(&HeadConfig::default(), 32).unwrap();
    let golden = [
        (2, [4.48392461690254318e-3, 4.01808131822205122e-2, 1.46969136967999708e-2], [5.04021362359194941e-6, -6.76668422956557260e-6]),
        (3, [-4.07101175281323474e-3, 1.61318872900532151e-2, 3.07498804338862675e-2], [-6.22465992453726006e-6, 5.22407303225821936e-7]),
        (4, [4.29248636049318205e-2, -4.91150283973198279e-2, 4.18942607338417677e-2], [1.30165996334108428e-7, -2.13804771926587188e-6]),
    ];
    for (layer, cls, reg) in golden {
        let out = heads
            .rpn_head(&FeatureMap::zeros(32, 7, 7), &FeatureMap::zeros(32, 31, 31), layer)
            .unwrap();
        let (c, r) = (out.cls.as_map(), out.reg.as_map());
        assert_eq!(c.shape(), (10, 25, 25));
        assert_eq!(r.shape(), (20, 25, 25));
        assert_planes_constant(c);
        assert_planes_constant(r);
        assert_relative_eq!(c.get(0, 0, 0), cls[0], max_relative = 1e-12);
        assert_relative_eq!(c.get(6, 12, 12), cls[1], max_relative = 1e-12);
        assert_relative_eq!(c.get(9, 24, 3), cls[2], max_relative = 1e-12);
        assert_relative_eq!(r.get(0, 0, 0), reg[0], max_relative = 1e-12);
        assert_relative_eq!(r.get(13, 5, 20), reg[1], max_relative = 1e-12);
    }
    assert!(heads.rpn_head(&FeatureMap::zeros(32, 7, 7), &FeatureMap::zeros(32, 31, 31), 5).is_err());
}
