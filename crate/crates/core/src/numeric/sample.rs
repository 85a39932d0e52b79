use super::{Real, Tape, Tensor, Var};
use crate::error::{bail_shape, Result};

/// Corner weights and flat offsets of one bilinear sample, or `None` when a
/// needed neighbour falls outside the grid.
#[derive(Clone, Copy)]
struct Stencil {
    y0: usize,
    x0: usize,
    fy: Real,
    fx: Real,
}

fn stencil(y: Real, x: Real, h: usize, w: usize) -> Option<Stencil> {
    if !y.is_finite() || !x.is_finite() {
        return None;
    }
    let (yf, xf) = (y.floor(), x.floor());
    let (fy, fx) = (y - yf, x - xf);
    if yf < 0.0 || xf < 0.0 {
        return None;
    }
    let (y0, x0) = (yf as usize, xf as usize);
    // A neighbour with zero weight is not needed, so exact edge samples stay valid.
    let y_ok = y0 < h && (fy == 0.0 || y0 + 1 < h);
    let x_ok = x0 < w && (fx == 0.0 || x0 + 1 < w);
    (y_ok && x_ok).then_some(Stencil { y0, x0, fy, fx })
}

impl Stencil {
    /// (flat offset, weight, d weight/dy, d weight/dx) for the used corners.
    fn corners(&self, w: usize) -> impl Iterator<Item = (usize, Real, Real, Real)> + '_ {
        let Stencil { y0, x0, fy, fx } = *self;
        let taps = [
            (0, 0, (1.0 - fy) * (1.0 - fx), -(1.0 - fx), -(1.0 - fy)),
            (0, 1, (1.0 - fy) * fx, -fx, 1.0 - fy),
            (1, 0, fy * (1.0 - fx), 1.0 - fx, -fy),
            (1, 1, fy * fx, fx, fy),
        ];
        taps.into_iter().filter_map(move |(dy, dx, wt, dwy, dwx)| {
            let used_y = dy == 0 || fy != 0.0;
            let used_x = dx == 0 || fx != 0.0;
            (used_y && used_x).then(|| ((y0 + dy) * w + x0 + dx, wt, dwy, dwx))
        })
    }
}

impl Tape {
    /// Samples `grid[C,H,W]` at continuous pixel coordinates `coords[2,H',W']`
    /// (channel 0 = row, channel 1 = column). Returns the `[C,H',W']` samples
    /// and a `[H',W']` validity mask; invalid samples are zero.
    pub fn bilinear_sample(&mut self, grid: Var, coords: Var) -> Result<(Var, Tensor)> {
        let (sg, sc) = (self.shape(grid).to_vec(), self.shape(coords).to_vec());
        if sg.len() != 3 || sc.len() != 3 || sc[0] != 2 {
            bail_shape!("bilinear_sample: grid {sg:?}, coords {sc:?}");
        }
        let (c, h, w) = (sg[0], sg[1], sg[2]);
        let (oh, ow) = (sc[1], sc[2]);
        let npix = oh * ow;
        let (gd, cd) = (self.value(grid).data(), self.value(coords).data());
        let stencils: Vec<Option<Stencil>> = (0..npix).map(|p| stencil(cd[p], cd[npix + p], h, w)).collect();
        let mut out = vec![0.0; c * npix];
        for (p, st) in stencils.iter().enumerate() {
            let Some(st) = st else { continue };
            for ch in 0..c {
                let plane = &gd[ch * h * w..(ch + 1) * h * w];
                out[ch * npix + p] = st.corners(w).map(|(o, wt, _, _)| wt * plane[o]).sum();
            }
        }
        let mask = Tensor::from_parts(
            vec![oh, ow],
            stencils.iter().map(|s| if s.is_some() { 1.0 } else { 0.0 }).collect(),
        );
        let var = self.push(
            Tensor::from_parts(vec![c, oh, ow], out),
            vec![grid, coords],
            Box::new(move |a| {
                let (gd, g) = (a.inputs[0].data(), a.grad);
                let mut ggrid = a.needs[0].then(|| vec![0.0; c * h * w]);
                let mut gcoord = a.needs[1].then(|| vec![0.0; 2 * npix]);
                for (p, st) in stencils.iter().enumerate() {
                    let Some(st) = st else { continue };
                    for ch in 0..c {
                        let gv = g[ch * npix + p];
                        if gv == 0.0 {
                            continue;
                        }
                        let base = ch * h * w;
                        for (o, wt, dwy, dwx) in st.corners(w) {
                            if let Some(gg) = ggrid.as_mut() {
                                gg[base + o] += gv * wt;
                            }
                            if let Some(gc) = gcoord.as_mut() {
                                gc[p] += gv * dwy * gd[base + o];
                                gc[npix + p] += gv * dwx * gd[base + o];
                            }
                        }
                    }
                }
                vec![ggrid, gcoord]
            }),
        );
        Ok((var, mask))
    }
}
