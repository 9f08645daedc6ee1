//! Barnes-Hut octree with monopole far field.
//!
//! Nodes are accepted when (node size)/(distance to centroid) ≤ θ *and* the
//! whole node cube is at least ε away from the target, so every accepted
//! interaction is in the regime where the mollified force equals the exact
//! Coulomb force. Everything else recurses down to direct leaf evaluation
//! with the mollified kernel (the self-pair contributes exactly zero since
//! F_ε(0) = 0).

use super::{coulomb_force, mollified_force, KernelSpec};
use crate::vec3::{self, Vec3};

const LEAF_CAP: usize = 16;
const MAX_DEPTH: usize = 48;

struct Node {
    center: Vec3,
    half: f64,
    centroid: Vec3,
    count: usize,
    children: Option<Box<[Node; 8]>>,
    /// Leaf point indices (empty for internal nodes).
    leaf: Vec<usize>,
}

pub struct Octree {
    root: Node,
    points: Vec<Vec3>,
}

impl Octree {
    pub fn build(points: &[Vec3]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for c in 0..3 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        let center = [
            0.5 * (lo[0] + hi[0]),
            0.5 * (lo[1] + hi[1]),
            0.5 * (lo[2] + hi[2]),
        ];
        let half = (0..3)
            .map(|c| hi[c] - lo[c])
            .fold(0.0f64, f64::max)
            .max(1e-300)
            * 0.5000001;
        let indices: Vec<usize> = (0..points.len()).collect();
        let root = build_node(points, indices, center, half, 0);
        Octree {
            root,
            points: points.to_vec(),
        }
    }

    /// Unnormalized force sum Σ_j F_ε(x − p_j) over all tree points.
    pub fn force_at(&self, x: Vec3, spec: &KernelSpec, theta: f64) -> Vec3 {
        let mut acc = vec3::ZERO;
        self.accumulate(&self.root, x, spec, theta, &mut acc);
        acc
    }

    fn accumulate(&self, node: &Node, x: Vec3, spec: &KernelSpec, theta: f64, acc: &mut Vec3) {
        if node.count == 0 {
            return;
        }
        match &node.children {
            Some(children) => {
                let d = vec3::dist(x, node.centroid);
                if d > 0.0 && 2.0 * node.half / d <= theta && cube_distance(node, x) >= spec.epsilon
                {
                    // Monopole about the centroid; every member is ≥ ε away,
                    // so the exact kernel applies.
                    let f = coulomb_force(vec3::sub(x, node.centroid)).expect("d > 0");
                    *acc = vec3::add(*acc, vec3::scale(f, node.count as f64));
                } else {
                    for child in children.iter() {
                        self.accumulate(child, x, spec, theta, acc);
                    }
                }
            }
            None => {
                for &p in &node.leaf {
                    *acc = vec3::add(*acc, mollified_force(vec3::sub(x, self.points[p]), spec));
                }
            }
        }
    }
}

fn build_node(points: &[Vec3], indices: Vec<usize>, center: Vec3, half: f64, depth: usize) -> Node {
    let count = indices.len();
    let mut centroid = vec3::ZERO;
    for &p in &indices {
        centroid = vec3::add(centroid, points[p]);
    }
    if count > 0 {
        centroid = vec3::scale(centroid, 1.0 / count as f64);
    }
    if count <= LEAF_CAP || depth >= MAX_DEPTH {
        return Node {
            center,
            half,
            centroid,
            count,
            children: None,
            leaf: indices,
        };
    }
    let mut buckets: [Vec<usize>; 8] = Default::default();
    for &p in &indices {
        let x = points[p];
        let oct = ((x[0] >= center[0]) as usize)
            | (((x[1] >= center[1]) as usize) << 1)
            | (((x[2] >= center[2]) as usize) << 2);
        buckets[oct].push(p);
    }
    let quarter = 0.5 * half;
    let mut built: Vec<Node> = Vec::with_capacity(8);
    for (oct, bucket) in buckets.into_iter().enumerate() {
        let child_center = [
            center[0] + if oct & 1 != 0 { quarter } else { -quarter },
            center[1] + if oct & 2 != 0 { quarter } else { -quarter },
            center[2] + if oct & 4 != 0 { quarter } else { -quarter },
        ];
        built.push(build_node(points, bucket, child_center, quarter, depth + 1));
    }
    let children: Box<[Node; 8]> = match built.try_into() {
        Ok(array) => Box::new(array),
        Err(_) => unreachable!("exactly eight octants"),
    };
    Node {
        center,
        half,
        centroid,
        count,
        children: Some(children),
        leaf: Vec::new(),
    }
}

fn cube_distance(node: &Node, x: Vec3) -> f64 {
    let mut d2 = 0.0;
    for c in 0..3 {
        let gap = (x[c] - node.center[c]).abs() - node.half;
        if gap > 0.0 {
            d2 += gap * gap;
        }
    }
    d2.sqrt()
}
