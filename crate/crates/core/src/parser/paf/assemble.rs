use crate::pose::{cell_to_pixel, HumanPose, Keypoint};
use crate::topology::SkeletonTopology;

use super::{LimbConnection, ParserParams, Peak};

struct Partial {
    slots: Vec<Option<u32>>,
    connection_score: f32,
    alive: bool,
}

/// Group accepted limb connections into people.
///
/// Connections are consumed in the order given (limb types in topology
/// order). A connection touching one existing person extends it unless that
/// person already holds a different peak for the part; one joining two people
/// merges them when their parts do not overlap; one inside a single person
/// only adds its score. A person's score is the sum of its keypoint scores and
/// connection scores divided by its part count.
pub fn assemble_humans(
    connections: &[LimbConnection],
    peaks: &[Vec<Peak>],
    topo: &SkeletonTopology,
    params: &ParserParams,
    stride: u32,
) -> Vec<HumanPose> {
    let by_id: Vec<&Peak> = {
        let mut all: Vec<&Peak> = peaks.iter().flatten().collect();
        all.sort_by_key(|p| p.id);
        all
    };
    let n_parts = topo.num_keypoints();
    let mut owner: Vec<Option<usize>> = vec![None; by_id.len()];
    let mut people: Vec<Partial> = Vec::new();

    for c in connections {
        let limb = topo.limbs()[c.limb as usize];
        let (part_a, part_b) = (limb.a as usize, limb.b as usize);
        let (ia, ib) = (c.peak_a as usize, c.peak_b as usize);
        match (owner[ia], owner[ib]) {
            (None, None) => {
                let mut slots = vec![None; n_parts];
                slots[part_a] = Some(c.peak_a);
                slots[part_b] = Some(c.peak_b);
                owner[ia] = Some(people.len());
                owner[ib] = Some(people.len());
                people.push(Partial {
                    slots,
                    connection_score: c.score,
                    alive: true,
                });
            }
            (Some(h), None) => attach(&mut people[h], &mut owner, h, part_b, c.peak_b, c.score),
            (None, Some(h)) => attach(&mut people[h], &mut owner, h, part_a, c.peak_a, c.score),
            (Some(x), Some(y)) if x == y => people[x].connection_score += c.score,
            (Some(x), Some(y)) => {
                let overlap = people[x]
                    .slots
                    .iter()
                    .zip(&people[y].slots)
                    .any(|(s, t)| s.is_some() && t.is_some());
                if overlap {
                    continue;
                }
                let (keep, gone) = (x.min(y), x.max(y));
                let moved = std::mem::take(&mut people[gone].slots);
                let moved_score = people[gone].connection_score;
                people[gone].alive = false;
                let target = &mut people[keep];
                for (part, slot) in moved.into_iter().enumerate() {
                    if let Some(id) = slot {
                        target.slots[part] = Some(id);
                        owner[id as usize] = Some(keep);
                    }
                }
                target.connection_score += moved_score + c.score;
            }
        }
    }

    let mut out: Vec<(u32, HumanPose)> = people
        .into_iter()
        .filter(|p| p.alive)
        .filter_map(|p| finish(p, &by_id, stride, params))
        .collect();
    out.sort_by(|(ida, a), (idb, b)| b.score.total_cmp(&a.score).then(ida.cmp(idb)));
    out.into_iter().map(|(_, h)| h).collect()
}

fn attach(
    person: &mut Partial,
    owner: &mut [Option<usize>],
    index: usize,
    part: usize,
    peak: u32,
    score: f32,
) {
    if person.slots[part].is_some() {
        return;
    }
    person.slots[part] = Some(peak);
    owner[peak as usize] = Some(index);
    person.connection_score += score;
}

/// Convert to a pose; returns it keyed by its smallest peak id for tie-breaks.
fn finish(p: Partial, by_id: &[&Peak], stride: u32, params: &ParserParams) -> Option<(u32, HumanPose)> {
    let mut keypoint_sum = 0.0f32;
    let mut n = 0u32;
    let mut first_id = u32::MAX;
    let keypoints: Vec<Option<Keypoint>> = p
        .slots
        .iter()
        .map(|slot| {
            slot.map(|id| {
                let pk = by_id[id as usize];
                keypoint_sum += pk.score;
                n += 1;
                first_id = first_id.min(id);
                let (x, y) = cell_to_pixel(pk.i, pk.j, stride);
                Keypoint { x, y, score: pk.score }
            })
        })
        .collect();
    if n < params.min_parts.max(1) {
        return None;
    }
    let score = (keypoint_sum + p.connection_score) / n as f32;
    if score < params.min_human_score {
        return None;
    }
    Some((
        first_id,
        HumanPose {
            keypoints,
            score,
            n_parts: n,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peaks_for(parts: &[(u32, u32, u32)], k: usize) -> Vec<Vec<Peak>> {
        let mut out = vec![Vec::new(); k];
        for (id, &(part, i, j)) in parts.iter().enumerate() {
            out[part as usize].push(Peak { part, i, j, score: 0.9, id: id as u32 });
        }
        out
    }

    #[test]
    fn empty_connections() {
        let topo = SkeletonTopology::coco18();
        let peaks = vec![Vec::new(); 18];
        assert!(assemble_humans(&[], &peaks, &topo, &ParserParams::default(), 8).is_empty());
    }

    #[test]
    fn chain_of_limbs_forms_one_person() {
        let topo = SkeletonTopology::coco18();
        // neck(1)=id0, r_shoulder(2)=id1, r_elbow(3)=id2, r_wrist(4)=id3
        let peaks = peaks_for(&[(1, 2, 5), (2, 2, 3), (3, 4, 3), (4, 6, 3)], 18);
        let conn = |limb, a, b| LimbConnection { limb, peak_a: a, peak_b: b, score: 0.8, good_fraction: 1.0 };
        let conns = [conn(0, 0, 1), conn(2, 1, 2), conn(3, 2, 3)];
        let people = assemble_humans(&conns, &peaks, &topo, &ParserParams::default(), 8);
        assert_eq!(people.len(), 1);
        assert_eq!(people[0].n_parts, 4);
        let expected = (4.0 * 0.9 + 3.0 * 0.8) / 4.0;
        assert!((people[0].score - expected).abs() < 1e-6);
        assert_eq!(people[0].keypoints[1].unwrap().x, 5.5 * 8.0 - 0.5);
    }

    #[test]
    fn fragments_merge() {
        let topo = SkeletonTopology::coco18();
        // two fragments: {neck, r_shoulder} via limb 0 and {r_elbow, r_wrist} via limb 3,
        // joined by limb 2 (r_shoulder -> r_elbow)
        let peaks = peaks_for(&[(1, 2, 5), (2, 2, 3), (3, 4, 3), (4, 6, 3)], 18);
        let conn = |limb, a, b| LimbConnection { limb, peak_a: a, peak_b: b, score: 0.5, good_fraction: 1.0 };
        let conns = [conn(0, 0, 1), conn(3, 2, 3), conn(2, 1, 2)];
        let people = assemble_humans(&conns, &peaks, &topo, &ParserParams::default(), 8);
        assert_eq!(people.len(), 1);
        assert_eq!(people[0].n_parts, 4);
    }

    #[test]
    fn small_people_are_dropped() {
        let topo = SkeletonTopology::coco18();
        let peaks = peaks_for(&[(1, 2, 5), (2, 2, 3)], 18);
        let conns = [LimbConnection { limb: 0, peak_a: 0, peak_b: 1, score: 1.0, good_fraction: 1.0 }];
        assert!(assemble_humans(&conns, &peaks, &topo, &ParserParams::default(), 8).is_empty());
    }
}
