//! Spreads sampled labels to unsampled vertices by proximity.

use std::collections::HashMap;

use crate::geometry::Vec3;

use super::MaterialGroups;

/// Default diffusion radius in metres.
pub const DEFAULT_DIFFUSION_RADIUS: f64 = 0.01;

type GridKey = (i64, i64, i64);

fn key(p: &Vec3, cell: f64) -> GridKey {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

/// Labels every vertex of `positions` (indexed by vertex id). Sampled
/// vertices keep their own label; the others copy the nearest classified
/// sampled vertex within `radius`, ties going to the lower vertex id.
pub fn diffuse_labels(groups: &MaterialGroups, positions: &[Vec3], radius: f64) -> Vec<Option<usize>> {
    let mut labels = vec![None; positions.len()];
    let mut sampled = vec![false; positions.len()];
    for v in groups.unclassified.iter().filter(|&&v| v < positions.len()) {
        sampled[*v] = true;
    }
    let mut grid: HashMap<GridKey, Vec<usize>> = HashMap::new();
    let usable = radius > 0.0 && radius.is_finite();
    for (k, g) in groups.groups.iter().enumerate() {
        for &v in g.iter().filter(|&&v| v < positions.len()) {
            labels[v] = Some(k);
            sampled[v] = true;
            if usable {
                grid.entry(key(&positions[v], radius)).or_default().push(v);
            }
        }
    }
    if !usable {
        return labels;
    }
    let r2 = radius * radius;
    for (v, p) in positions.iter().enumerate() {
        if sampled[v] {
            continue;
        }
        let (kx, ky, kz) = key(p, radius);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&(kx + dx, ky + dy, kz + dz)) else {
                        continue;
                    };
                    for &u in bucket {
                        let d2 = (positions[u] - p).norm_squared();
                        if d2 <= r2 && best.map_or(true, |(bd, bu)| d2 < bd || (d2 == bd && u < bu)) {
                            best = Some((d2, u));
                        }
                    }
                }
            }
        }
        labels[v] = best.and_then(|(_, u)| labels[u]);
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn groups(g: &[&[usize]], unclassified: &[usize]) -> MaterialGroups {
        MaterialGroups {
            groups: g.iter().map(|s| s.iter().copied().collect::<BTreeSet<_>>()).collect(),
            unclassified: unclassified.iter().copied().collect(),
        }
    }

    #[test]
    fn diffusion_examples() {
        let positions = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.005, 0.0, 0.0),
            Vec3::new(0.5, 0.05, 0.0),
            Vec3::new(1.0, 0.003, 0.0),
        ];
        let g = groups(&[&[0], &[]], &[1]);
        let labels = diffuse_labels(&g, &positions, DEFAULT_DIFFUSION_RADIUS);
        assert_eq!(labels, vec![Some(0), None, Some(0), None, None]);
    }

    #[test]
    fn equal_distance_tie_goes_to_lower_id() {
        let positions = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.008, 0.0, 0.0),
            Vec3::new(-0.004, 0.0, 0.0),
            Vec3::new(0.004, 0.0, 0.0),
        ];
        // vertex 0 sits midway between 2 and 3
        let g = groups(&[&[3], &[2]], &[]);
        let labels = diffuse_labels(&g, &positions, 0.01);
        assert_eq!(labels[0], Some(1));
        let g = groups(&[&[2], &[3]], &[]);
        assert_eq!(diffuse_labels(&g, &positions, 0.01)[0], Some(0));
    }

    #[test]
    fn matches_brute_force() {
        let positions: Vec<Vec3> = (0..300)
            .map(|i| {
                let t = i as f64;
                Vec3::new((t * 0.37).sin() * 0.05, (t * 0.71).cos() * 0.05, (t * 0.13).sin() * 0.02)
            })
            .collect();
        let g = groups(&[&(0..300).step_by(7).collect::<Vec<_>>(), &(3..300).step_by(11).filter(|v| v % 7 != 0).collect::<Vec<_>>()], &[1, 2]);
        let labels = diffuse_labels(&g, &positions, 0.01);
        for (v, p) in positions.iter().enumerate() {
            if g.label_of(v).is_some() || g.unclassified.contains(&v) {
                continue;
            }
            let nearest = g
                .groups
                .iter()
                .enumerate()
                .flat_map(|(k, s)| s.iter().map(move |&u| (k, u)))
                .map(|(k, u)| ((positions[u] - p).norm(), u, k))
                .filter(|(d, _, _)| *d <= 0.01)
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            assert_eq!(labels[v], nearest.map(|n| n.2), "vertex {v}");
        }
    }
}
