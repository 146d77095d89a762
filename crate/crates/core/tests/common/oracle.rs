//! Brute-force reference implementations, written without reusing any of the
//! library's internals. Where results are compared bit-for-bit the final
//! arithmetic follows the same textbook formula; the search and ordering
//! logic is deliberately different.

use odbench::data::{BoundingBox, Dataset, Detection, DetectionSet, GroundTruthObject, ImageBuffer};

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let left = a.x1().max(b.x1());
    let right = a.x2().min(b.x2());
    let top = a.y1().max(b.y1());
    let bottom = a.y2().min(b.y2());
    let inter = (right - left).max(0.0) * (bottom - top).max(0.0);
    if inter == 0.0 {
        return 0.0;
    }
    let area = |r: &BoundingBox| (r.x2() - r.x1()) * (r.y2() - r.y1());
    inter / (area(a) + area(b) - inter)
}

/// Result of matching within one image: per detection `Some(true)` for a
/// match, `Some(false)` for a false positive, `None` when ignored; plus the
/// matched ground-truth index.
pub struct ImageMatch {
    pub status: Vec<Option<bool>>,
    pub partner: Vec<Option<usize>>,
}

/// Every injective partial map from detections to eligible, non-difficult
/// ground truths is enumerated; the winner is the lexicographic maximum of
/// the per-detection key (IoU, then lower ground-truth index) listed in
/// descending-score order, unmatched detections ranking lowest.
pub fn brute_force_match(gts: &[GroundTruthObject], dets: &[Detection], thr: f64, class_aware: bool) -> ImageMatch {
    // descending score, ties by index: selection sort
    let mut order = Vec::new();
    let mut used = vec![false; dets.len()];
    for _ in 0..dets.len() {
        let mut best: Option<usize> = None;
        for d in 0..dets.len() {
            if used[d] {
                continue;
            }
            if best.is_none_or(|b| dets[d].score > dets[b].score) {
                best = Some(d);
            }
        }
        let b = best.unwrap();
        used[b] = true;
        order.push(b);
    }

    let eligible = |d: usize, g: usize| {
        let gt = &gts[g];
        !gt.difficult
            && (!class_aware || gt.class_id == dets[d].class_id)
            && iou(&dets[d].bbox, &gt.bbox) > thr
    };

    fn key_less(a: &[Option<(f64, usize)>], b: &[Option<(f64, usize)>]) -> bool {
        for (x, y) in a.iter().zip(b) {
            let ord = match (x, y) {
                (None, None) => std::cmp::Ordering::Equal,
                (None, Some(_)) => std::cmp::Ordering::Less,
                (Some(_), None) => std::cmp::Ordering::Greater,
                (Some((ia, ga)), Some((ib, gb))) => ia.total_cmp(ib).then(gb.cmp(ga)),
            };
            if ord != std::cmp::Ordering::Equal {
                return ord == std::cmp::Ordering::Less;
            }
        }
        false
    }

    let mut best_map: Vec<Option<usize>> = vec![None; dets.len()];
    let mut best_key: Option<Vec<Option<(f64, usize)>>> = None;
    let mut current: Vec<Option<usize>> = vec![None; dets.len()];
    let mut taken = vec![false; gts.len()];

    #[allow(clippy::too_many_arguments)]
    fn search(
        pos: usize,
        order: &[usize],
        gts: &[GroundTruthObject],
        dets: &[Detection],
        eligible: &dyn Fn(usize, usize) -> bool,
        current: &mut Vec<Option<usize>>,
        taken: &mut Vec<bool>,
        best_map: &mut Vec<Option<usize>>,
        best_key: &mut Option<Vec<Option<(f64, usize)>>>,
        key_less: fn(&[Option<(f64, usize)>], &[Option<(f64, usize)>]) -> bool,
    ) {
        if pos == order.len() {
            let key: Vec<Option<(f64, usize)>> = order
                .iter()
                .map(|&d| current[d].map(|g| (iou(&dets[d].bbox, &gts[g].bbox), g)))
                .collect();
            if best_key.as_ref().is_none_or(|b| key_less(b, &key)) {
                *best_key = Some(key);
                best_map.clone_from(current);
            }
            return;
        }
        let d = order[pos];
        current[d] = None;
        search(pos + 1, order, gts, dets, eligible, current, taken, best_map, best_key, key_less);
        for g in 0..gts.len() {
            if !taken[g] && eligible(d, g) {
                taken[g] = true;
                current[d] = Some(g);
                search(pos + 1, order, gts, dets, eligible, current, taken, best_map, best_key, key_less);
                current[d] = None;
                taken[g] = false;
            }
        }
    }
    search(
        0,
        &order,
        gts,
        dets,
        &eligible,
        &mut current,
        &mut taken,
        &mut best_map,
        &mut best_key,
        key_less,
    );

    let status = (0..dets.len())
        .map(|d| {
            if best_map[d].is_some() {
                return Some(true);
            }
            let hits_difficult = gts.iter().any(|gt| {
                gt.difficult
                    && (!class_aware || gt.class_id == dets[d].class_id)
                    && iou(&dets[d].bbox, &gt.bbox) > thr
            });
            if hits_difficult {
                None
            } else {
                Some(false)
            }
        })
        .collect();
    ImageMatch {
        status,
        partner: best_map,
    }
}

/// Area under the monotone precision envelope, in the order of `ranked` hits.
pub fn ap(ranked: &[bool], positives: usize) -> f64 {
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    for k in 0..ranked.len() {
        let tp = ranked[..=k].iter().filter(|h| **h).count();
        recall.push(tp as f64 / positives as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    let mut area = 0.0;
    for i in 0..ranked.len() {
        let envelope = precision[i..].iter().copied().fold(0.0f64, f64::max);
        let prev = if i == 0 { 0.0 } else { recall[i - 1] };
        area += (recall[i] - prev) * envelope;
    }
    area
}

fn relabel(dataset: &Dataset, dets: &DetectionSet, fuse: bool) -> (Vec<Vec<GroundTruthObject>>, Vec<Vec<Detection>>) {
    let gts = dataset
        .images()
        .iter()
        .map(|img| {
            img.objects
                .iter()
                .map(|o| GroundTruthObject {
                    class_id: if fuse { 0 } else { o.class_id },
                    ..o.clone()
                })
                .collect()
        })
        .collect();
    let ds = dataset
        .images()
        .iter()
        .map(|img| {
            dets.for_image(&img.image_id)
                .iter()
                .map(|d| Detection {
                    class_id: if fuse { 0 } else { d.class_id },
                    ..d.clone()
                })
                .collect()
        })
        .collect();
    (gts, ds)
}

fn map_over(gts: &[Vec<GroundTruthObject>], dets: &[Vec<Detection>], classes: usize, thr: f64) -> f64 {
    let matches: Vec<ImageMatch> = gts
        .iter()
        .zip(dets)
        .map(|(g, d)| brute_force_match(g, d, thr, true))
        .collect();
    let mut sum = 0.0;
    let mut counted = 0usize;
    for c in 0..classes {
        let positives = gts.iter().flatten().filter(|o| o.class_id == c && !o.difficult).count();
        if positives == 0 {
            continue;
        }
        // (score, image, detection, hit)
        let mut pool = Vec::new();
        for (i, (m, d)) in matches.iter().zip(dets).enumerate() {
            for (k, det) in d.iter().enumerate() {
                if det.class_id == c {
                    if let Some(hit) = m.status[k] {
                        pool.push((det.score, i, k, hit));
                    }
                }
            }
        }
        let mut ranked = Vec::new();
        while !pool.is_empty() {
            let mut best = 0;
            for j in 1..pool.len() {
                let (s, i, k, _) = pool[j];
                let (bs, bi, bk, _) = pool[best];
                if s > bs || (s == bs && (i, k) < (bi, bk)) {
                    best = j;
                }
            }
            ranked.push(pool.remove(best).3);
        }
        sum += ap(&ranked, positives);
        counted += 1;
    }
    sum / counted as f64 * 100.0
}

pub fn map(dataset: &Dataset, dets: &DetectionSet, thr: f64) -> f64 {
    let (g, d) = relabel(dataset, dets, false);
    map_over(&g, &d, dataset.class_count(), thr)
}

pub fn ap_loc(dataset: &Dataset, dets: &DetectionSet, thr: f64) -> f64 {
    let (g, d) = relabel(dataset, dets, true);
    map_over(&g, &d, 1, thr)
}

pub fn csr(dataset: &Dataset, dets: &DetectionSet, thr: f64) -> f64 {
    let mut correct = 0usize;
    let mut positives = 0usize;
    for img in dataset.images() {
        let d = dets.for_image(&img.image_id);
        let m = brute_force_match(&img.objects, d, thr, false);
        positives += img.objects.iter().filter(|o| !o.difficult).count();
        for (k, partner) in m.partner.iter().enumerate() {
            if let Some(g) = partner {
                if img.objects[*g].class_id == d[k].class_id {
                    correct += 1;
                }
            }
        }
    }
    correct as f64 / positives as f64 * 100.0
}

/// Direct 2-D windowed SSIM, averaged over the three channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (w, h) = (a.width() as usize, a.height() as usize);
    let sigma: f64 = 1.5;
    let mut kernel = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    for row in &mut kernel {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mut channel_sum = 0.0;
    for c in 0..3 {
        let mut acc = 0.0;
        let mut windows = 0usize;
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let px = |img: &ImageBuffer, i: usize, j: usize| f64::from(img.get((x0 + j) as u32, (y0 + i) as u32, c));
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        mx += kernel[i][j] * px(a, i, j);
                        my += kernel[i][j] * px(b, i, j);
                    }
                }
                let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let dx = px(a, i, j) - mx;
                        let dy = px(b, i, j) - my;
                        vx += kernel[i][j] * dx * dx;
                        vy += kernel[i][j] * dy * dy;
                        cov += kernel[i][j] * dx * dy;
                    }
                }
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                windows += 1;
            }
        }
        channel_sum += acc / windows as f64;
    }
    channel_sum / 3.0
}

/// Plain scalar bilinear resampling with half-pixel centres.
pub fn resize(img: &ImageBuffer, w: u32, h: u32) -> Vec<u8> {
    let (sw, sh) = (img.width() as f64, img.height() as f64);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let sx = ((x as f64 + 0.5) * sw / w as f64 - 0.5).clamp(0.0, sw - 1.0);
            let sy = ((y as f64 + 0.5) * sh / h as f64 - 0.5).clamp(0.0, sh - 1.0);
            let (x0, y0) = (sx.floor() as u32, sy.floor() as u32);
            let x1 = (x0 + 1).min(img.width() - 1);
            let y1 = (y0 + 1).min(img.height() - 1);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for c in 0..3 {
                let p = |xx: u32, yy: u32| f64::from(img.get(xx, yy, c));
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                out.push((top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

/// Central finite differences of `f` at `x`.
pub fn finite_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
