use crate::tensor::TensorF32;

use super::{MapView, ParserParams, Peak};

/// Local maxima of one confidence channel.
///
/// A cell is a peak when it clears `conf_threshold` and is `>=` every cell of
/// the centered `nms_window` square (clipped at the borders). Among equal
/// values inside a window the lexicographically smallest `(i, j)` wins.
/// Output is sorted by score descending, then `(i, j)` ascending, with ids
/// `0..n` in that order.
pub fn nms_peaks(map: MapView<'_>, part: u32, params: &ParserParams) -> Vec<Peak> {
    let (h, w) = (map.height, map.width);
    if h == 0 || w == 0 {
        return Vec::new();
    }
    let r = (params.nms_window / 2) as usize;
    let mut peaks = Vec::new();
    for (i, row) in map.data.chunks_exact(w).enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v < params.conf_threshold || !wins_window(map, i, j, r) {
                continue;
            }
            peaks.push(Peak {
                part,
                i: i as u32,
                j: j as u32,
                score: v,
                id: 0,
            });
        }
    }
    sort_and_number(&mut peaks, 0);
    peaks
}

/// Run [`nms_peaks`] over the first `parts` channels of `conf`, numbering
/// peaks uniquely across the frame in part order.
pub fn extract_peaks(conf: &TensorF32, parts: usize, params: &ParserParams) -> Vec<Vec<Peak>> {
    let mut next_id = 0;
    (0..parts)
        .map(|p| {
            let mut peaks = nms_peaks(MapView::channel(conf, p), p as u32, params);
            for pk in &mut peaks {
                pk.id += next_id;
            }
            next_id += peaks.len() as u32;
            peaks
        })
        .collect()
}

fn sort_and_number(peaks: &mut [Peak], first_id: u32) {
    peaks.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| (a.i, a.j).cmp(&(b.i, b.j)))
    });
    for (n, p) in peaks.iter_mut().enumerate() {
        p.id = first_id + n as u32;
    }
}

/// Whether `(i, j)` is the winner of its clipped window: nothing larger,
/// and no equal cell earlier in row-major order.
fn wins_window(map: MapView<'_>, i: usize, j: usize, r: usize) -> bool {
    let v = map.at(i, j);
    let (lo_j, hi_j) = (j.saturating_sub(r), (j + r).min(map.width - 1));
    for ii in i.saturating_sub(r)..=(i + r).min(map.height - 1) {
        let row = &map.data[ii * map.width..(ii + 1) * map.width];
        for (jj, &u) in row.iter().enumerate().take(hi_j + 1).skip(lo_j) {
            if u > v || (u == v && (ii, jj) < (i, j)) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ParserParams {
        ParserParams::default()
    }

    #[test]
    fn all_zero_map_has_no_peaks() {
        let data = vec![0.0; 64];
        assert!(nms_peaks(MapView::new(8, 8, &data), 0, &params()).is_empty());
    }

    #[test]
    fn single_hot_cell() {
        let mut data = vec![0.0; 64];
        data[3 * 8 + 4] = 1.0;
        let peaks = nms_peaks(MapView::new(8, 8, &data), 2, &params());
        assert_eq!(peaks, vec![Peak { part: 2, i: 3, j: 4, score: 1.0, id: 0 }]);
    }

    #[test]
    fn plateau_keeps_only_first_cell() {
        let mut data = vec![0.0; 36];
        for (i, j) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            data[i * 6 + j] = 0.5;
        }
        let peaks = nms_peaks(MapView::new(6, 6, &data), 0, &params());
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].i, peaks[0].j), (2, 2));
    }

    #[test]
    fn sorted_by_score_then_position() {
        let mut data = vec![0.0; 100];
        data[1 * 10 + 1] = 0.5;
        data[8 * 10 + 8] = 0.9;
        data[1 * 10 + 8] = 0.5;
        let peaks = nms_peaks(MapView::new(10, 10, &data), 0, &params());
        let cells: Vec<_> = peaks.iter().map(|p| (p.i, p.j, p.id)).collect();
        assert_eq!(cells, vec![(8, 8, 0), (1, 1, 1), (1, 8, 2)]);
    }

    #[test]
    fn below_threshold_is_ignored() {
        let mut data = vec![0.0; 16];
        data[5] = 0.09;
        assert!(nms_peaks(MapView::new(4, 4, &data), 0, &params()).is_empty());
    }

    #[test]
    fn ids_are_unique_across_parts() {
        let mut conf = TensorF32::zeros(vec![3, 4, 4]);
        conf.outer_mut(0)[0] = 1.0;
        conf.outer_mut(1)[5] = 1.0;
        conf.outer_mut(1)[15] = 0.8;
        let peaks = extract_peaks(&conf, 2, &params());
        let ids: Vec<u32> = peaks.iter().flatten().map(|p| p.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }
}
