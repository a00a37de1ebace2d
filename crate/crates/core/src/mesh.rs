//! Structured bilinear Quad-4 grid on an axis-aligned rectangle.

use crate::error::{Error, Result};

/// Uniform structured quadrilateral mesh.
///
/// Nodes are numbered row-major, `node = j * (nx + 1) + i`; elements
/// likewise with `elem = j * nx + i`. Element side length is uniform.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
    coords: Vec<[f64; 2]>,
}

/// One of the four sides of the rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Interior facet between two horizontally or vertically adjacent elements.
#[derive(Debug, Clone, Copy)]
pub struct InteriorEdge {
    pub elems: [usize; 2],
    /// Shared nodes, ordered along the edge direction.
    pub nodes: [usize; 2],
    /// Unit reference normal pointing from `elems[0]` into `elems[1]`.
    pub normal: [f64; 2],
}

impl Mesh {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64, origin: [f64; 2]) -> Result<Self> {
        if nx == 0 || ny == 0 || lx <= 0.0 || ly <= 0.0 {
            return Err(Error::config("mesh dimensions must be positive"));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        if (hx - hy).abs() > 1e-12 * hx.max(hy) {
            return Err(Error::config(format!(
                "non-uniform element spacing: hx = {hx}, hy = {hy}"
            )));
        }
        let h = hx;
        let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push([origin[0] + i as f64 * h, origin[1] + j as f64 * h]);
            }
        }
        Ok(Mesh { nx, ny, h, origin, coords })
    }

    /// Unit square `[0, 1]^2`.
    pub fn unit_square(n: usize) -> Self {
        Mesh::new(n, n, 1.0, 1.0, [0.0, 0.0]).unwrap()
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_elems(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn elem_id(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn elem_ij(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    pub fn coord(&self, node: usize) -> [f64; 2] {
        self.coords[node]
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Element corner nodes, counterclockwise from the lower-left.
    pub fn elem_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = self.elem_ij(e);
        [
            self.node_id(i, j),
            self.node_id(i + 1, j),
            self.node_id(i + 1, j + 1),
            self.node_id(i, j + 1),
        ]
    }

    /// Lower-left corner of an element.
    pub fn elem_origin(&self, e: usize) -> [f64; 2] {
        let (i, j) = self.elem_ij(e);
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    pub fn elem_center(&self, e: usize) -> [f64; 2] {
        let o = self.elem_origin(e);
        [o[0] + 0.5 * self.h, o[1] + 0.5 * self.h]
    }

    /// Element containing a physical point (clamped to the domain).
    pub fn elem_of_point(&self, x: [f64; 2]) -> usize {
        let i = (((x[0] - self.origin[0]) / self.h).floor() as isize)
            .clamp(0, self.nx as isize - 1) as usize;
        let j = (((x[1] - self.origin[1]) / self.h).floor() as isize)
            .clamp(0, self.ny as isize - 1) as usize;
        self.elem_id(i, j)
    }

    /// Bilinear shape function values at a physical point inside element `e`.
    pub fn shape(&self, e: usize, x: [f64; 2]) -> [f64; 4] {
        let o = self.elem_origin(e);
        let xi = (x[0] - o[0]) / self.h;
        let eta = (x[1] - o[1]) / self.h;
        [
            (1.0 - xi) * (1.0 - eta),
            xi * (1.0 - eta),
            xi * eta,
            (1.0 - xi) * eta,
        ]
    }

    /// Shape function gradients with respect to physical coordinates.
    pub fn shape_grad(&self, e: usize, x: [f64; 2]) -> [[f64; 2]; 4] {
        let o = self.elem_origin(e);
        let xi = (x[0] - o[0]) / self.h;
        let eta = (x[1] - o[1]) / self.h;
        let ih = 1.0 / self.h;
        [
            [-(1.0 - eta) * ih, -(1.0 - xi) * ih],
            [(1.0 - eta) * ih, -xi * ih],
            [eta * ih, xi * ih],
            [-eta * ih, (1.0 - xi) * ih],
        ]
    }

    /// All interior facets, lexicographic order (vertical sweeps first).
    pub fn interior_edges(&self) -> Vec<InteriorEdge> {
        let mut edges = Vec::new();
        // vertical facets between (i, j) and (i + 1, j)
        for j in 0..self.ny {
            for i in 0..self.nx - 1 {
                edges.push(InteriorEdge {
                    elems: [self.elem_id(i, j), self.elem_id(i + 1, j)],
                    nodes: [self.node_id(i + 1, j), self.node_id(i + 1, j + 1)],
                    normal: [1.0, 0.0],
                });
            }
        }
        // horizontal facets between (i, j) and (i, j + 1)
        for j in 0..self.ny - 1 {
            for i in 0..self.nx {
                edges.push(InteriorEdge {
                    elems: [self.elem_id(i, j), self.elem_id(i, j + 1)],
                    nodes: [self.node_id(i, j + 1), self.node_id(i + 1, j + 1)],
                    normal: [0.0, 1.0],
                });
            }
        }
        edges
    }

    /// Nodes lying on a domain side, in ascending coordinate order.
    pub fn side_nodes(&self, side: Side) -> Vec<usize> {
        match side {
            Side::Left => (0..=self.ny).map(|j| self.node_id(0, j)).collect(),
            Side::Right => (0..=self.ny).map(|j| self.node_id(self.nx, j)).collect(),
            Side::Bottom => (0..=self.nx).map(|i| self.node_id(i, 0)).collect(),
            Side::Top => (0..=self.nx).map(|i| self.node_id(i, self.ny)).collect(),
        }
    }

    /// Boundary edges on a domain side as (element, edge node pair).
    pub fn side_edges(&self, side: Side) -> Vec<(usize, [usize; 2])> {
        match side {
            Side::Left => (0..self.ny)
                .map(|j| (self.elem_id(0, j), [self.node_id(0, j), self.node_id(0, j + 1)]))
                .collect(),
            Side::Right => (0..self.ny)
                .map(|j| {
                    (
                        self.elem_id(self.nx - 1, j),
                        [self.node_id(self.nx, j), self.node_id(self.nx, j + 1)],
                    )
                })
                .collect(),
            Side::Bottom => (0..self.nx)
                .map(|i| (self.elem_id(i, 0), [self.node_id(i, 0), self.node_id(i + 1, 0)]))
                .collect(),
            Side::Top => (0..self.nx)
                .map(|i| {
                    (
                        self.elem_id(i, self.ny - 1),
                        [self.node_id(i, self.ny), self.node_id(i + 1, self.ny)],
                    )
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn shape_partition_of_unity() {
        let m = Mesh::unit_square(4);
        let pts = [[0.1, 0.2], [0.13, 0.01], [0.24, 0.24]];
        for p in pts {
            let e = m.elem_of_point(p);
            let n = m.shape(e, p);
            assert_relative_eq!(n.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn shape_reproduces_linear_field() {
        let m = Mesh::new(3, 2, 0.6, 0.4, [1.0, -0.5]).unwrap();
        let f = |x: [f64; 2]| 2.0 * x[0] - 3.0 * x[1] + 0.7;
        let p = [1.37, -0.21];
        let e = m.elem_of_point(p);
        let n = m.shape(e, p);
        let nodal: f64 = m
            .elem_nodes(e)
            .iter()
            .zip(n.iter())
            .map(|(&a, &w)| w * f(m.coord(a)))
            .sum();
        assert_relative_eq!(nodal, f(p), max_relative = 1e-13);
    }

    #[test]
    fn grad_consistent_with_fd() {
        let m = Mesh::new(5, 5, 1.0, 1.0, [0.0, 0.0]).unwrap();
        let p = [0.33, 0.57];
        let e = m.elem_of_point(p);
        let g = m.shape_grad(e, p);
        let d = 1e-7;
        for k in 0..4 {
            for dir in 0..2 {
                let mut pp = p;
                let mut pm = p;
                pp[dir] += d;
                pm[dir] -= d;
                let fd = (m.shape(e, pp)[k] - m.shape(e, pm)[k]) / (2.0 * d);
                assert_relative_eq!(g[k][dir], fd, epsilon = 1e-6);
            }
        }
    }
}
