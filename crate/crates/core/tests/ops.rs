mod common;

use adapipe::gradcheck;
use adapipe::loss::softmax_rows;
use adapipe::model::{Dense, Head, OptimizerKind};
use adapipe::ops::*;
use adapipe::{Matrix, Model};
use common::{blob_task, gaussian, perturb_norms, relu_margin, small_model};

fn max_confidence(model: &Model<f32>, x: &Matrix<f32>) -> f32 {
    softmax_rows(&model.predict(x).unwrap()).as_slice().iter().copied().fold(0.0, f32::max)
}

#[test]
fn pseudo_label_zero_weight_matches_supervised_only() {
    let task = blob_task::<f32>(3, 3, 6, 6, 0.8, 1);
    let model = small_model::<f32>(6, 3, 2);
    let hp = PseudoLabelHp {
        pseudo_weight: 0.0,
        threshold: 0.5,
        ..Default::default()
    };
    let a = ssl_pseudo_label(&model, &task, &hp, 9).unwrap();
    let b = ssl_pseudo_label(&model, &task.supervised_only(), &hp, 9).unwrap();
    assert_eq!(a, b);
    let on = PseudoLabelHp {
        pseudo_weight: 1.0,
        ..hp
    };
    assert_ne!(ssl_pseudo_label(&model, &task, &on, 9).unwrap(), a);
}

#[test]
fn pseudo_label_unreachable_threshold_matches_supervised_only() {
    let task = blob_task::<f32>(3, 3, 6, 6, 0.8, 3);
    let model = small_model::<f32>(6, 3, 4);
    let hp = PseudoLabelHp {
        pseudo_weight: 1.0,
        threshold: 1.0,
        epochs: 3,
        ..Default::default()
    };
    let a = ssl_pseudo_label(&model, &task, &hp, 1).unwrap();
    assert!(max_confidence(&a, &task.unlabeled) < 1.0);
    assert!(max_confidence(&model, &task.unlabeled) < 1.0);
    let b = ssl_pseudo_label(&model, &task.supervised_only(), &hp, 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn entropy_zero_weight_matches_supervised_only() {
    let task = blob_task::<f32>(4, 2, 5, 6, 0.8, 5);
    let model = small_model::<f32>(6, 4, 6);
    let hp = EntropyHp {
        entropy_weight: 0.0,
        threshold: 0.6,
        ..Default::default()
    };
    let a = ssl_entropy(&model, &task, &hp, 2).unwrap();
    assert_eq!(a, ssl_entropy(&model, &task.supervised_only(), &hp, 2).unwrap());
    let on = EntropyHp {
        entropy_weight: 1.0,
        ..hp
    };
    assert_ne!(ssl_entropy(&model, &task, &on, 2).unwrap(), a);
}

#[test]
fn mean_teacher_zero_weight_matches_supervised_only() {
    let task = blob_task::<f32>(3, 3, 6, 6, 0.8, 7);
    let model = small_model::<f32>(6, 3, 8);
    let hp = MeanTeacherHp {
        pseudo_weight: 0.0,
        threshold: 0.5,
        ..Default::default()
    };
    let a = ssl_mean_teacher(&model, &task, &hp, 3).unwrap();
    assert_eq!(a, ssl_mean_teacher(&model, &task.supervised_only(), &hp, 3).unwrap());
}

#[test]
fn mean_teacher_zero_decay_tracks_student() {
    let task = blob_task::<f32>(3, 3, 6, 6, 0.8, 7);
    let model = small_model::<f32>(6, 3, 8);
    let hp = MeanTeacherHp {
        threshold: 0.5,
        ..Default::default()
    };
    let (student, teacher) = mean_teacher_with_decay(&model, &task, &hp, 3, 0.0).unwrap();
    assert_eq!(student, teacher);
}

#[test]
fn mean_teacher_zero_lr_stays_at_init() {
    let task = blob_task::<f32>(3, 3, 6, 6, 0.8, 7);
    let model = small_model::<f32>(6, 3, 8);
    for optimizer in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        let hp = MeanTeacherHp {
            lr: 0.0,
            optimizer,
            threshold: 0.5,
            ..Default::default()
        };
        let (student, teacher) = mean_teacher_with_decay(&model, &task, &hp, 3, MEAN_TEACHER_EMA).unwrap();
        assert_eq!(student, model);
        assert_eq!(teacher.predict(&task.unlabeled).unwrap(), model.predict(&task.unlabeled).unwrap());
    }
}

fn scalar_model(w: f64) -> Model<f64> {
    let head = Head::Linear(Dense::new(Matrix::new(1, 1, vec![w]).unwrap(), vec![0.0]).unwrap());
    Model::new(1, vec![], None, head).unwrap()
}

#[test]
fn ema_matches_closed_form_sequence() {
    let students = [1.0, -2.0, 4.0];
    let mut teacher = scalar_model(0.5);
    for s in students {
        teacher.ema_toward(&scalar_model(s), 0.9);
    }
    // t3 = 0.9³·t0 + 0.1·(0.9²·s1 + 0.9·s2 + s3)
    let expect = 0.729 * 0.5 + 0.1 * (0.81 * 1.0 + 0.9 * -2.0 + 4.0);
    let got = teacher.params()[0].1[0];
    assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
}

#[test]
fn fixmatch_unreachable_threshold_matches_supervised_only() {
    let task = blob_task::<f32>(3, 4, 8, 6, 0.8, 11);
    let model = small_model::<f32>(6, 3, 12);
    let hp = FixMatchHp {
        threshold: 1.0,
        epochs: 3,
        ..Default::default()
    };
    let a = ssl_fixmatch(&model, &task, &hp, 4).unwrap();
    assert!(max_confidence(&a, &task.unlabeled) < 1.0);
    assert_eq!(a, ssl_fixmatch(&model, &task.supervised_only(), &hp, 4).unwrap());
    let zero = FixMatchHp {
        pseudo_weight: 0.0,
        threshold: 0.5,
        ..hp
    };
    let z = ssl_fixmatch(&model, &task, &zero, 4).unwrap();
    assert_eq!(z, ssl_fixmatch(&model, &task.supervised_only(), &zero, 4).unwrap());
    let teacher = FixMatchHp {
        teacher: Switch::On,
        threshold: 0.5,
        ..hp
    };
    assert_ne!(ssl_fixmatch(&model, &task, &teacher, 4).unwrap(), z);
}

#[test]
fn fixmatch_schedule_endpoints() {
    let total = 50;
    assert_eq!(warmup_cosine_scale(0, total), 0.0);
    assert_eq!(warmup_cosine_scale(5, total), 1.0);
    assert!(warmup_cosine_scale(total - 1, total) <= 1e-8);
    assert!((warmup_cosine_scale(2, total) - 0.4).abs() < 1e-12);
    let mut prev = 1.0;
    for s in 5..total {
        let v = warmup_cosine_scale(s, total);
        assert!(v <= prev);
        prev = v;
    }
}

#[test]
fn fixmatch_ratio_split() {
    assert_eq!(fixmatch_batch_split(10, 4).unwrap(), (2, 8));
    assert_eq!(fixmatch_batch_split(8, 1).unwrap(), (4, 4));
    assert_eq!(fixmatch_batch_split(8, 10).unwrap(), (1, 7));
    assert!(fixmatch_batch_split(10, 0).is_err());
    assert!(fixmatch_batch_split(10, 11).is_err());
    let task = blob_task::<f32>(2, 2, 2, 3, 0.5, 1);
    let hp = FixMatchHp {
        unlabeled_ratio: 11,
        ..Default::default()
    };
    assert!(ssl_fixmatch(&small_model::<f32>(3, 2, 1), &task, &hp, 0).is_err());
}

/// A model and batch with every ReLU input at least 0.05 from its kink.
fn micro_batch() -> (Model<f64>, Matrix<f64>, Vec<usize>, Matrix<f64>) {
    for seed in 0..200 {
        let mut m = small_model::<f64>(4, 3, 21 + seed);
        perturb_norms(&mut m, 5 + seed);
        let (xl, xu) = (gaussian(5, 4, 1.0, 1 + seed), gaussian(6, 4, 1.0, 1000 + seed));
        if relu_margin(&m, &xl) > 0.05 && relu_margin(&m, &xu) > 0.05 {
            return (m, xl, vec![0, 1, 2, 1, 0], xu);
        }
    }
    panic!("no kink-free micro-batch found");
}

#[test]
fn pseudo_label_objective_matches_finite_differences() {
    let (m, xl, yl, xu) = micro_batch();
    let targets = vec![Some(2), None, Some(0), Some(1), None, Some(2)];
    let w = 0.7;
    let (_, analytic) = pseudo_label_objective(&m, &xl, &yl, &xu, &targets, w).unwrap();
    let objective = |m: &Model<f64>| pseudo_label_objective(m, &xl, &yl, &xu, &targets, w).unwrap().0;
    let bad = gradcheck::compare(&m, objective, &analytic, 1e-4, 1e-6);
    assert!(bad.is_empty(), "{:?}", &bad[..bad.len().min(5)]);

    let (_, sup) = supervised_objective(&m, &xl, &yl).unwrap();
    let (_, only_u) = pseudo_label_objective(&m, &xl.select_rows(&[]), &[], &xu, &targets, 1.0).unwrap();
    let mut sum = sup.clone();
    sum.add_scaled(&only_u, w);
    for (a, b) in analytic.tensors.iter().flatten().zip(sum.tensors.iter().flatten()) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn entropy_objective_matches_finite_differences() {
    let (m, xl, yl, xu) = micro_batch();
    // normalized entropy never exceeds 1, so every row is in the term
    let (_, analytic) = entropy_objective(&m, &xl, &yl, &xu, 1.0, 0.4).unwrap();
    let objective = |m: &Model<f64>| entropy_objective(m, &xl, &yl, &xu, 1.0, 0.4).unwrap().0;
    let bad = gradcheck::compare(&m, objective, &analytic, 1e-4, 1e-6);
    assert!(bad.is_empty(), "{:?}", &bad[..bad.len().min(5)]);
}

#[test]
fn uniform_rows_leave_the_entropy_term() {
    let (m, xl, yl, _) = micro_batch();
    let mut flat = m.clone();
    if let Head::Linear(d) = &mut flat.head {
        d.weight = Matrix::zeros(d.weight.rows(), d.weight.cols());
    }
    let xu = gaussian(4, 4, 1.0, 3);
    let (with, _) = entropy_objective(&flat, &xl, &yl, &xu, 0.6, 1.0).unwrap();
    let (without, _) = supervised_objective(&flat, &xl, &yl).unwrap();
    assert_eq!(with, without);
}

/// Plain batch-gradient logistic regression, independent of the crate.
fn logistic_fit(x: &Matrix<f32>, y: &[usize]) -> Vec<usize> {
    let d = x.cols();
    let mut w = vec![0.0f64; d + 1];
    for _ in 0..2000 {
        let mut g = vec![0.0; d + 1];
        for (row, &t) in x.iter_rows().zip(y) {
            let z: f64 = w[d] + row.iter().zip(&w).map(|(a, b)| f64::from(*a) * b).sum::<f64>();
            let err = 1.0 / (1.0 + (-z).exp()) - t as f64;
            for j in 0..d {
                g[j] += err * f64::from(row[j]);
            }
            g[d] += err;
        }
        for (wj, gj) in w.iter_mut().zip(&g) {
            *wj -= 0.1 * gj;
        }
    }
    x.iter_rows()
        .map(|row| usize::from(w[d] + row.iter().zip(&w).map(|(a, b)| f64::from(*a) * b).sum::<f64>() > 0.0))
        .collect()
}

#[test]
fn finetune_separable_blobs_reach_full_training_accuracy() {
    let task = blob_task::<f32>(2, 5, 0, 4, 0.5, 31);
    assert_eq!(logistic_fit(&task.labeled, &task.labels), task.labels, "oracle: data not separable");
    let model = small_model::<f32>(4, 5, 32);
    let hp = FinetuneHp {
        optimizer: OptimizerKind::Sgd,
        lr_classifier: 0.05,
        lr_embed: 0.05,
        epochs: 20,
        ..Default::default()
    };
    let out = finetune(&model, &task, &hp, 0).unwrap();
    assert_eq!(out.predict(&task.labeled).unwrap().argmax_rows(), task.labels);
}

#[test]
fn every_operator_is_deterministic_and_keeps_widths() {
    let task = blob_task::<f32>(3, 2, 6, 6, 0.8, 41);
    let model = small_model::<f32>(6, 3, 42);
    type Op = Box<dyn Fn(u64) -> Model<f32>>;
    let (t, m) = (task.clone(), model.clone());
    let ops: Vec<Op> = vec![
        Box::new({
            let (t, m) = (t.clone(), m.clone());
            move |s| finetune(&m, &t, &FinetuneHp::default(), s).unwrap()
        }),
        Box::new({
            let (t, m) = (t.clone(), m.clone());
            move |_| {
                let hp = TransPnHp {
                    cipa_switch: Switch::On,
                    ..Default::default()
                };
                trans_pn(&m, &t, &hp).unwrap()
            }
        }),
        Box::new({
            let (t, m) = (t.clone(), m.clone());
            move |s| tune_bn(&m, &t, &TuneBnHp::default(), s).unwrap()
        }),
        Box::new({
            let (t, m) = (t.clone(), m.clone());
            move |s| ssl_pseudo_label(&m, &t, &PseudoLabelHp::default(), s).unwrap()
        }),
        Box::new({
            let (t, m) = (t.clone(), m.clone());
            move |s| ssl_entropy(&m, &t, &EntropyHp::default(), s).unwrap()
        }),
        Box::new({
            let (t, m) = (t.clone(), m.clone());
            move |s| ssl_mean_teacher(&m, &t, &MeanTeacherHp::default(), s).unwrap()
        }),
        Box::new(move |s| ssl_fixmatch(&m, &t, &FixMatchHp::default(), s).unwrap()),
    ];
    for op in &ops {
        let a = op(5);
        assert_eq!(a, op(5));
        assert_eq!(a.input_width(), model.input_width());
        assert_eq!(a.embedding_width(), model.embedding_width());
        assert_eq!(a.num_classes(), 3);
    }
}
