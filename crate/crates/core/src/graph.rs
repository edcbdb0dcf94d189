//! Flattened two-layer graph.
//!
//! Node ids `0..P` are pixels in row-major order, `P..P+R` are regions.
//! Every edge is stored once with `u < v`.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::raster::RegionMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    PixelPixel,
    RegionRegion,
    Cross,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::PixelPixel => "pixel-pixel",
            EdgeKind::RegionRegion => "region-region",
            EdgeKind::Cross => "cross",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub kind: EdgeKind,
}

/// Which granularity layer a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Pixel,
    Region,
}

/// All 8-neighbour pixel pairs of an `height x width` grid, `u < v`,
/// sorted lexicographically.
pub fn pixel_adjacency(height: usize, width: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..height {
        for c in 0..width {
            let u = r * width + c;
            if c + 1 < width {
                out.push((u, u + 1));
            }
            if r + 1 < height {
                if c > 0 {
                    out.push((u, u + width - 1));
                }
                out.push((u, u + width));
                if c + 1 < width {
                    out.push((u, u + width + 1));
                }
            }
        }
    }
    out
}

/// Region pairs that share a 4-adjacent pixel boundary, sorted, each once.
pub fn region_adjacency(regions: &RegionMap) -> Vec<(usize, usize)> {
    let (h, w) = (regions.height(), regions.width());
    let ids = regions.ids();
    let mut pairs = BTreeSet::new();
    let mut add = |a: u32, b: u32| {
        if a != b {
            pairs.insert((a.min(b) as usize, a.max(b) as usize));
        }
    };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                add(ids[i], ids[i + 1]);
            }
            if r + 1 < h {
                add(ids[i], ids[i + w]);
            }
        }
    }
    pairs.into_iter().collect()
}

/// Pixel and region layers combined into one undirected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGraph {
    height: usize,
    width: usize,
    num_regions: usize,
    edges: Vec<Edge>,
    region_of: Vec<usize>,
}

impl FusionGraph {
    /// Builds pixel-pixel, region-region and one pixel-region edge per pixel.
    ///
    /// Edges are ordered by kind, then lexicographically by endpoints.
    pub fn flatten(height: usize, width: usize, regions: &RegionMap) -> Result<Self> {
        if (regions.height(), regions.width()) != (height, width) {
            return Err(Error::DimensionMismatch(format!(
                "graph is {height}x{width}, region map is {}x{}",
                regions.height(),
                regions.width()
            )));
        }
        let p = height * width;
        let mut edges: Vec<Edge> = pixel_adjacency(height, width)
            .into_iter()
            .map(|(u, v)| Edge {
                u,
                v,
                kind: EdgeKind::PixelPixel,
            })
            .collect();
        edges.extend(region_adjacency(regions).into_iter().map(|(a, b)| Edge {
            u: p + a,
            v: p + b,
            kind: EdgeKind::RegionRegion,
        }));
        let region_of: Vec<usize> = regions.ids().iter().map(|&id| id as usize).collect();
        edges.extend(region_of.iter().enumerate().map(|(i, &r)| Edge {
            u: i,
            v: p + r,
            kind: EdgeKind::Cross,
        }));
        Ok(Self {
            height,
            width,
            num_regions: regions.num_regions(),
            edges,
            region_of,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_pixel_nodes(&self) -> usize {
        self.height * self.width
    }

    pub fn num_region_nodes(&self) -> usize {
        self.num_regions
    }

    pub fn num_nodes(&self) -> usize {
        self.num_pixel_nodes() + self.num_regions
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Node id of the region containing pixel `pixel`.
    pub fn region_node_of(&self, pixel: usize) -> usize {
        self.num_pixel_nodes() + self.region_of[pixel]
    }

    /// Region index (not node id) of every pixel.
    pub fn region_of(&self) -> &[usize] {
        &self.region_of
    }

    pub fn layer_of(&self, node: usize) -> Layer {
        if node < self.num_pixel_nodes() {
            Layer::Pixel
        } else {
            Layer::Region
        }
    }

    /// Node id range of a layer.
    pub fn layer_nodes(&self, layer: Layer) -> std::ops::Range<usize> {
        match layer {
            Layer::Pixel => 0..self.num_pixel_nodes(),
            Layer::Region => self.num_pixel_nodes()..self.num_nodes(),
        }
    }

    pub fn count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Writes the edge list as `u,v,kind` CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "u,v,kind")?;
        for e in &self.edges {
            writeln!(out, "{},{},{}", e.u, e.v, e.kind)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_neighbors(h: usize, w: usize) -> BTreeSet<(usize, usize)> {
        let mut set = BTreeSet::new();
        for a in 0..h * w {
            for b in a + 1..h * w {
                let (ra, ca) = ((a / w) as isize, (a % w) as isize);
                let (rb, cb) = ((b / w) as isize, (b % w) as isize);
                if (ra - rb).abs() <= 1 && (ca - cb).abs() <= 1 {
                    set.insert((a, b));
                }
            }
        }
        set
    }

    #[test]
    fn pixel_adjacency_counts() {
        assert!(pixel_adjacency(1, 1).is_empty());
        assert_eq!(pixel_adjacency(2, 2).len(), 6);
        assert_eq!(pixel_adjacency(3, 3).len(), 20);
        for (h, w) in [(1, 5), (4, 1), (3, 4), (5, 5)] {
            let edges = pixel_adjacency(h, w);
            let set: BTreeSet<_> = edges.iter().copied().collect();
            assert_eq!(set.len(), edges.len());
            assert_eq!(set, brute_neighbors(h, w), "{h}x{w}");
        }
    }

    #[test]
    fn region_adjacency_cases() {
        let halves = RegionMap::new(2, 4, vec![0, 0, 1, 1, 0, 0, 1, 1]).unwrap();
        assert_eq!(region_adjacency(&halves), vec![(0, 1)]);
        let stripes = RegionMap::new(2, 3, vec![0, 1, 2, 0, 1, 2]).unwrap();
        assert_eq!(region_adjacency(&stripes), vec![(0, 1), (1, 2)]);
        let single = RegionMap::new(2, 2, vec![0; 4]).unwrap();
        assert!(region_adjacency(&single).is_empty());
        // diagonal contact only
        let diag = RegionMap::new(2, 2, vec![0, 1, 2, 0]).unwrap();
        assert_eq!(region_adjacency(&diag), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn flatten_counts() {
        let one = RegionMap::new(2, 2, vec![0; 4]).unwrap();
        let g = FusionGraph::flatten(2, 2, &one).unwrap();
        assert_eq!(g.count(EdgeKind::PixelPixel), 6);
        assert_eq!(g.count(EdgeKind::RegionRegion), 0);
        assert_eq!(g.count(EdgeKind::Cross), 4);
        assert_eq!(g.edges().len(), 10);

        let two = RegionMap::new(2, 1, vec![0, 1]).unwrap();
        let g = FusionGraph::flatten(2, 1, &two).unwrap();
        assert_eq!(g.count(EdgeKind::PixelPixel), 1);
        assert_eq!(g.count(EdgeKind::RegionRegion), 1);
        assert_eq!(g.count(EdgeKind::Cross), 2);
        assert!(g
            .edges()
            .contains(&Edge { u: 2, v: 3, kind: EdgeKind::RegionRegion }));
        assert_eq!(g.region_node_of(1), 3);
    }

    #[test]
    fn flatten_rejects_mismatch() {
        let r = RegionMap::new(2, 2, vec![0; 4]).unwrap();
        assert!(FusionGraph::flatten(2, 3, &r).is_err());
    }

    #[test]
    fn csv_dump() {
        let r = RegionMap::new(1, 2, vec![0, 0]).unwrap();
        let g = FusionGraph::flatten(1, 2, &r).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "u,v,kind\n0,1,pixel-pixel\n0,2,cross\n1,2,cross\n"
        );
    }
}
