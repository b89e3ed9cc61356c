//! Proxy selection: the VQA query, answer parsing and the local realism
//! heuristic used when the VQA answer is unusable.

use serde::{Deserialize, Serialize};

use crate::condition::{color_clusters, foreground_gradients, ForegroundMask};
use crate::error::{Error, Result};
use crate::model::{CandidateImage, ProxyImage, RasterImage, SelectionMethod};

pub const VQA_QUESTION: &str =
    "Which image do you think is the most realistic and shows the most 3D feeling?";

/// Width in luma units per pixel of each gradient-histogram bin.
pub const GRADIENT_BIN_WIDTH: f64 = 4.0;
pub const GRADIENT_BINS: usize = 32;

pub fn build_vqa_question(n: usize) -> String {
    format!("{VQA_QUESTION} Answer with a single number from 1 to {n}.")
}

/// First decimal integer token in `text` that lies in `1..=n`.
pub fn parse_vqa_answer(text: &str, n: usize) -> Result<usize> {
    let mut digits = String::new();
    let mut tokens = Vec::new();
    for c in text.chars().chain(std::iter::once(' ')) {
        if c.is_ascii_digit() {
            digits.push(c);
        } else if !digits.is_empty() {
            tokens.push(std::mem::take(&mut digits));
        }
    }
    tokens
        .iter()
        .filter_map(|t| {
            let t = t.trim_start_matches('0');
            // anything longer than 20 digits is far out of range anyway
            if t.len() > 20 {
                None
            } else {
                t.parse::<u128>().ok()
            }
        })
        .find(|&v| v >= 1 && v <= n as u128)
        .map(|v| v as usize)
        .ok_or_else(|| Error::Unparseable(text.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RealismWeights {
    pub shading: f64,
    pub gradient_entropy: f64,
}

impl Default for RealismWeights {
    fn default() -> Self {
        Self {
            shading: 1.0,
            gradient_entropy: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealismScore {
    pub shading_term: f64,
    pub gradient_entropy: f64,
    pub total: f64,
}

pub fn realism_score(img: &RasterImage, mask: &ForegroundMask) -> Result<RealismScore> {
    realism_score_with(img, mask, &RealismWeights::default())
}

pub fn realism_score_with(img: &RasterImage, mask: &ForegroundMask, weights: &RealismWeights) -> Result<RealismScore> {
    if img.dims() != mask.dims() {
        return Err(Error::DimensionMismatch {
            expected: mask.dims(),
            actual: img.dims(),
        });
    }
    if mask.coverage() <= 0.0 {
        return Err(Error::EmptyForeground);
    }
    let (_, shading_term) = color_clusters(img, mask);
    let grads = foreground_gradients(img, mask);
    let mut hist = [0u64; GRADIENT_BINS];
    let mut n = 0u64;
    for (i, g) in grads.iter().enumerate() {
        if mask.is_foreground(i) {
            hist[((g / GRADIENT_BIN_WIDTH) as usize).min(GRADIENT_BINS - 1)] += 1;
            n += 1;
        }
    }
    let gradient_entropy = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0);
    Ok(RealismScore {
        shading_term,
        gradient_entropy,
        total: weights.shading * shading_term + weights.gradient_entropy * gradient_entropy,
    })
}

/// 1-based index of the largest value; ties go to the lowest index.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i + 1)
}

/// Picks the proxy: a user override wins, then a parseable VQA answer, then
/// the realism heuristic. `vqa` receives the question and all candidate
/// images in order and returns the raw answer.
pub fn select_proxy<F>(
    candidates: &[CandidateImage],
    vqa: F,
    mask: &ForegroundMask,
    override_index: Option<usize>,
    weights: &RealismWeights,
) -> Result<ProxyImage>
where
    F: FnOnce(&str, &[&RasterImage]) -> Result<String>,
{
    let n = candidates.len();
    if n == 0 {
        return Err(Error::NoCandidates);
    }
    let pick = |index: usize, method: SelectionMethod, rationale: String| ProxyImage {
        image: candidates[index - 1].image.clone(),
        chosen_index: index,
        method,
        rationale,
    };
    if let Some(index) = override_index {
        if index == 0 || index > n {
            return Err(Error::InvalidOverride { index, count: n });
        }
        return Ok(pick(index, SelectionMethod::UserOverride, format!("user selected candidate {index}")));
    }

    let images: Vec<&RasterImage> = candidates.iter().map(|c| &c.image).collect();
    let why_not = match vqa(&build_vqa_question(n), &images) {
        Ok(answer) => match parse_vqa_answer(&answer, n) {
            Ok(index) => return Ok(pick(index, SelectionMethod::Vqa, format!("vqa answer: {answer:?}"))),
            Err(_) => format!("vqa answer {answer:?} had no index in 1..={n}"),
        },
        Err(e @ (Error::BackendUnavailable { .. } | Error::MalformedResponse(_) | Error::Unparseable(_))) => {
            format!("vqa failed: {e}")
        }
        Err(e) => return Err(e),
    };

    let scores = candidates
        .iter()
        .map(|c| realism_score_with(&c.image, mask, weights).map(|s| s.total))
        .collect::<Result<Vec<f64>>>()?;
    let index = argmax_first(&scores).expect("non-empty");
    let listed: Vec<String> = scores.iter().map(|s| format!("{s:.4}")).collect();
    Ok(pick(
        index,
        SelectionMethod::HeuristicFallback,
        format!("{why_not}; realism scores [{}]", listed.join(", ")),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::foreground_mask;
    use crate::fixtures;
    use crate::model::ConditionKind;
    use proptest::prelude::*;

    fn candidate(image: RasterImage, i: usize) -> CandidateImage {
        CandidateImage {
            image,
            condition_kind: ConditionKind::CannyEdge,
            condition_index: i,
            backend_id: "test".into(),
            seed: i as u64,
        }
    }

    #[test]
    fn question_has_verbatim_prefix_and_suffix() {
        assert_eq!(
            build_vqa_question(4),
            "Which image do you think is the most realistic and shows the most 3D feeling? Answer with a single number from 1 to 4."
        );
        assert!(build_vqa_question(1).ends_with("from 1 to 1."));
    }

    #[test]
    fn parses_first_in_range_integer() {
        assert_eq!(parse_vqa_answer("Image 3 looks most realistic", 4).unwrap(), 3);
        assert_eq!(parse_vqa_answer("2", 4).unwrap(), 2);
        assert_eq!(parse_vqa_answer("I pick 7, no wait, 02", 4).unwrap(), 2);
        assert!(matches!(parse_vqa_answer("none of them", 4), Err(Error::Unparseable(_))));
        assert!(parse_vqa_answer("0 or 5", 4).is_err());
        assert!(parse_vqa_answer("99999999999999999999999999 1", 4).unwrap() == 1);
    }

    /// Independent scan: split on non-digits and take the first in range.
    fn scan_oracle(text: &str, n: usize) -> Option<usize> {
        text.split(|c: char| !c.is_ascii_digit())
            .filter(|t| !t.is_empty())
            .find_map(|t| {
                let v: u128 = t.parse().ok()?;
                (1..=n as u128).contains(&v).then_some(v as usize)
            })
    }

    proptest! {
        #[test]
        fn parser_stays_in_range(text in "[a-zA-Z0-9 .,!?\\n-]{0,40}", n in 1usize..16) {
            match parse_vqa_answer(&text, n) {
                Ok(i) => prop_assert!((1..=n).contains(&i)),
                Err(e) => prop_assert!(matches!(e, Error::Unparseable(_))),
            }
            prop_assert_eq!(parse_vqa_answer(&text, n).ok(), scan_oracle(&text, n));
        }

        #[test]
        fn argmax_survives_positive_scaling(scores in proptest::collection::vec(0.0f64..100.0, 1..10), k in 0.01f64..100.0) {
            let scaled: Vec<f64> = scores.iter().map(|s| s * k).collect();
            prop_assert_eq!(argmax_first(&scores), argmax_first(&scaled));
        }
    }

    #[test]
    fn constant_foreground_scores_zero() {
        let img = fixtures::flat_disk(48, 16.0);
        let s = realism_score(&img, &foreground_mask(&img)).unwrap();
        assert_eq!(s.shading_term, 0.0);
        assert_eq!(s.gradient_entropy, 0.0);
        assert_eq!(s.total, 0.0);
    }

    #[test]
    fn sphere_beats_flat_disk_and_mirror_is_neutral() {
        let sphere = fixtures::shaded_sphere(48, 16.0);
        let disk = fixtures::flat_disk(48, 16.0);
        let mask = foreground_mask(&disk);
        assert_eq!(mask, foreground_mask(&sphere));
        let s = realism_score(&sphere, &mask).unwrap();
        let d = realism_score(&disk, &mask).unwrap();
        assert!(s.total > d.total, "{s:?} {d:?}");

        let mirrored = sphere.mirror_horizontal();
        let m = realism_score(&mirrored, &foreground_mask(&mirrored)).unwrap();
        assert!((m.total - s.total).abs() < 1e-9);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_first(&[0.1, 0.9, 0.9, 0.2]), Some(2));
        assert_eq!(argmax_first(&[]), None);
    }

    fn four() -> (Vec<CandidateImage>, ForegroundMask) {
        let disk = fixtures::flat_disk(48, 16.0);
        let sphere = fixtures::shaded_sphere(48, 16.0);
        let mask = foreground_mask(&disk);
        let c = vec![
            candidate(disk.clone(), 0),
            candidate(sphere, 1),
            candidate(disk.clone(), 2),
            candidate(disk, 3),
        ];
        (c, mask)
    }

    #[test]
    fn vqa_answer_wins() {
        let (c, mask) = four();
        let p = select_proxy(&c, |q, imgs| {
            assert!(q.starts_with(VQA_QUESTION));
            assert_eq!(imgs.len(), 4);
            Ok("Image 3".into())
        }, &mask, None, &RealismWeights::default())
        .unwrap();
        assert_eq!(p.chosen_index, 3);
        assert_eq!(p.method, SelectionMethod::Vqa);
        assert_eq!(p.image, c[2].image);
    }

    #[test]
    fn unreachable_or_garbled_vqa_falls_back() {
        let (c, mask) = four();
        let down = |_: &str, _: &[&RasterImage]| Err(Error::BackendUnavailable { attempts: 3, message: "down".into() });
        let p = select_proxy(&c, down, &mask, None, &RealismWeights::default()).unwrap();
        assert_eq!((p.chosen_index, p.method), (2, SelectionMethod::HeuristicFallback));
        let p = select_proxy(&c, |_, _| Ok("the shiny one".into()), &mask, None, &RealismWeights::default()).unwrap();
        assert_eq!((p.chosen_index, p.method), (2, SelectionMethod::HeuristicFallback));
        assert!(p.rationale.contains("shiny"));
    }

    #[test]
    fn override_takes_precedence() {
        let (c, mask) = four();
        let p = select_proxy(&c, |_, _| panic!("vqa must not run"), &mask, Some(4), &RealismWeights::default()).unwrap();
        assert_eq!((p.chosen_index, p.method), (4, SelectionMethod::UserOverride));
        assert!(matches!(
            select_proxy(&c, |_, _| Ok("1".into()), &mask, Some(5), &RealismWeights::default()),
            Err(Error::InvalidOverride { index: 5, count: 4 })
        ));
        assert!(matches!(
            select_proxy(&[], |_, _| Ok("1".into()), &mask, None, &RealismWeights::default()),
            Err(Error::NoCandidates)
        ));
    }
}
