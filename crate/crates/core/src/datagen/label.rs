use super::graph::InletBand;
use crate::raster::{LabelMask, Raster, BACKGROUND, CONNECTED, NON_CONNECTED};

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let grand = parent[parent[i as usize] as usize];
        parent[i as usize] = grand;
        i = grand;
    }
    i
}

/// Three-class connectivity labels for a binary vessel raster.
///
/// Vessel pixels 4-connected to a vessel pixel inside the inlet band become
/// [`CONNECTED`], other vessel pixels [`NON_CONNECTED`], the rest
/// [`BACKGROUND`]. Implemented as union-find component labelling followed by
/// marking every component that has a pixel in the band.
pub fn label_connectivity(vessels: &Raster, inlet: InletBand) -> LabelMask {
    let (h, w) = vessels.dims();
    let mut parent: Vec<u32> = (0..(h * w) as u32).collect();
    for row in 0..h {
        for col in 0..w {
            if vessels.get(row, col) == 0 {
                continue;
            }
            let idx = (row * w + col) as u32;
            if col > 0 && vessels.get(row, col - 1) != 0 {
                let (a, b) = (find(&mut parent, idx), find(&mut parent, idx - 1));
                parent[a.max(b) as usize] = a.min(b);
            }
            if row > 0 && vessels.get(row - 1, col) != 0 {
                let (a, b) = (find(&mut parent, idx), find(&mut parent, idx - w as u32));
                parent[a.max(b) as usize] = a.min(b);
            }
        }
    }
    let mut perfused = vec![false; h * w];
    for row in 0..h {
        for col in inlet.start..inlet.end.min(w) {
            if vessels.get(row, col) != 0 {
                let root = find(&mut parent, (row * w + col) as u32);
                perfused[root as usize] = true;
            }
        }
    }
    let mut out = Raster::new(h, w);
    for idx in 0..h * w {
        let label = if vessels.data()[idx] == 0 {
            BACKGROUND
        } else if perfused[find(&mut parent, idx as u32) as usize] {
            CONNECTED
        } else {
            NON_CONNECTED
        };
        out.data_mut()[idx] = label;
    }
    out
}
