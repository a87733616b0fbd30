use crate::congraph::ConvGraph;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

use super::{GatLayer, GatParams};

#[derive(Debug, Clone)]
pub struct GatLayerTape {
    /// `Z = H W`
    pub z: Matrix,
    /// Per edge `j → i`: `z_i + z_j (+ We f_ij)`, before the LeakyReLU.
    pub pre: Matrix,
    /// Per edge attention logit `aᵀ LeakyReLU(pre)`.
    pub score: Vec<f64>,
    /// Per edge attention weight, softmax over the in-edges of the destination.
    pub alpha: Vec<f64>,
    /// `out_i = Σ_j α_ij z_j`
    pub out: Matrix,
}

#[derive(Debug, Clone)]
pub struct GatTape {
    pub x: Matrix,
    pub layers: [GatLayerTape; 2],
    /// `ReLU(layers[0].out)`
    pub hidden: Matrix,
}

#[inline]
fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

#[inline]
fn leaky_grad(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        slope
    }
}

fn check_layer(layer: &GatLayer, in_dim: usize, ef: Option<&Matrix>, l: usize) -> Result<()> {
    let o = layer.out_dim();
    if layer.in_dim() != in_dim {
        return Err(Error::DimensionMismatch(format!(
            "layer {l}: input dim {in_dim} but W is {:?}",
            layer.w.shape()
        )));
    }
    if layer.a.shape() != (1, o) {
        return Err(Error::DimensionMismatch(format!(
            "layer {l}: attention vector {:?} for out dim {o}",
            layer.a.shape()
        )));
    }
    match (&layer.we, ef) {
        (None, None) => Ok(()),
        (Some(we), Some(f)) if we.shape() == (f.cols(), o) => Ok(()),
        (Some(we), Some(f)) => Err(Error::DimensionMismatch(format!(
            "layer {l}: We is {:?} but edge features have dim {}",
            we.shape(),
            f.cols()
        ))),
        (Some(_), None) => Err(Error::EdgeAttr(format!(
            "layer {l} has an edge projection but no edge features were given"
        ))),
        (None, Some(_)) => Err(Error::EdgeAttr(format!(
            "edge features given but layer {l} has no edge projection"
        ))),
    }
}

fn layer_forward(
    graph: &ConvGraph,
    ef: Option<&Matrix>,
    h: &Matrix,
    layer: &GatLayer,
    slope: f64,
) -> GatLayerTape {
    let m = graph.n_nodes();
    let o = layer.out_dim();
    let z = h.matmul(&layer.w);
    let proj = match (ef, &layer.we) {
        (Some(f), Some(we)) => Some(f.matmul(we)),
        _ => None,
    };
    let edges = graph.edges();
    let a = layer.a.row(0);
    let mut pre = Matrix::zeros(edges.len(), o);
    let mut score = vec![0.0; edges.len()];
    let mut alpha = vec![0.0; edges.len()];
    let mut out = Matrix::zeros(m, o);
    let mut q = vec![0.0; o];
    for i in 0..m {
        let range = graph.in_edges(i);
        let zi = z.row(i);
        let mut max = f64::NEG_INFINITY;
        for e in range.clone() {
            let zj = z.row(edges[e].0);
            let p = pre.row_mut(e);
            for c in 0..o {
                p[c] = zi[c] + zj[c];
            }
            if let Some(proj) = &proj {
                for (pc, &v) in p.iter_mut().zip(proj.row(e)) {
                    *pc += v;
                }
            }
            for (qc, &pc) in q.iter_mut().zip(p.iter()) {
                *qc = leaky(pc, slope);
            }
            score[e] = dot(a, &q);
            max = max.max(score[e]);
        }
        let mut total = 0.0;
        for e in range.clone() {
            alpha[e] = (score[e] - max).exp();
            total += alpha[e];
        }
        let orow = out.row_mut(i);
        for e in range {
            alpha[e] /= total;
            for (oc, &zc) in orow.iter_mut().zip(z.row(edges[e].0)) {
                *oc += alpha[e] * zc;
            }
        }
    }
    GatLayerTape {
        z,
        pre,
        score,
        alpha,
        out,
    }
}

/// Returns `(dW, da, dWe, dH)`; `dH` only when `need_dh`.
#[allow(clippy::too_many_arguments)]
fn layer_backward(
    graph: &ConvGraph,
    ef: Option<&Matrix>,
    h: &Matrix,
    layer: &GatLayer,
    slope: f64,
    tape: &GatLayerTape,
    dout: &Matrix,
    need_dh: bool,
) -> (Matrix, Matrix, Option<Matrix>, Option<Matrix>) {
    let m = graph.n_nodes();
    let o = layer.out_dim();
    let edges = graph.edges();
    let a = layer.a.row(0);
    let z = &tape.z;
    let mut dz = Matrix::zeros(m, o);
    let mut da = Matrix::zeros(1, o);
    // Gradient w.r.t. the per-edge projected features, reduced into dWe below.
    let mut dproj = ef.map(|_| Matrix::zeros(edges.len(), o));
    let mut dalpha = Vec::new();
    let mut dp = vec![0.0; o];
    for i in 0..m {
        let range = graph.in_edges(i);
        let gi = dout.row(i);
        dalpha.clear();
        let mut weighted = 0.0;
        for e in range.clone() {
            let d = dot(gi, z.row(edges[e].0));
            weighted += tape.alpha[e] * d;
            dalpha.push(d);
        }
        for (k, e) in range.enumerate() {
            let j = edges[e].0;
            let al = tape.alpha[e];
            // message path: out_i += α z_j
            for (dzc, &gc) in dz.row_mut(j).iter_mut().zip(gi) {
                *dzc += al * gc;
            }
            // softmax → score
            let ds = al * (dalpha[k] - weighted);
            let p = tape.pre.row(e);
            for c in 0..o {
                da.as_mut_slice()[c] += ds * leaky(p[c], slope);
                dp[c] = ds * a[c] * leaky_grad(p[c], slope);
            }
            for (dzc, &v) in dz.row_mut(i).iter_mut().zip(&dp) {
                *dzc += v;
            }
            for (dzc, &v) in dz.row_mut(j).iter_mut().zip(&dp) {
                *dzc += v;
            }
            if let Some(dproj) = &mut dproj {
                dproj.row_mut(e).copy_from_slice(&dp);
            }
        }
    }
    let dw = h.t_matmul(&dz);
    let dwe = match (ef, dproj) {
        (Some(f), Some(dproj)) => Some(f.t_matmul(&dproj)),
        _ => None,
    };
    let dh = need_dh.then(|| dz.matmul_t(&layer.w));
    (dw, da, dwe, dh)
}

/// Two GATv2 layers with a ReLU in between. Attention weights are available
/// from the returned tape (`tape.layers[l].alpha`, aligned with `graph.edges()`).
pub fn gatv2_forward(
    graph: &ConvGraph,
    edge_features: Option<&Matrix>,
    x: &Matrix,
    params: &GatParams,
) -> Result<(Matrix, GatTape)> {
    if x.rows() != graph.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} nodes",
            x.rows(),
            graph.n_nodes()
        )));
    }
    if let Some(f) = edge_features {
        if f.rows() != graph.n_edges() {
            return Err(Error::DimensionMismatch(format!(
                "{} edge-feature rows for {} edges",
                f.rows(),
                graph.n_edges()
            )));
        }
    }
    let [l0, l1] = &params.layers;
    check_layer(l0, x.cols(), edge_features, 0)?;
    check_layer(l1, l0.out_dim(), edge_features, 1)?;

    let t0 = layer_forward(graph, edge_features, x, l0, params.leaky_slope);
    let hidden = t0.out.map(|v| v.max(0.0));
    let t1 = layer_forward(graph, edge_features, &hidden, l1, params.leaky_slope);
    let logits = t1.out.clone();
    Ok((
        logits,
        GatTape {
            x: x.clone(),
            layers: [t0, t1],
            hidden,
        },
    ))
}

pub fn gatv2_backward(
    tape: &GatTape,
    graph: &ConvGraph,
    edge_features: Option<&Matrix>,
    params: &GatParams,
    dlogits: &Matrix,
) -> Result<GatParams> {
    let [l0, l1] = &params.layers;
    if dlogits.shape() != tape.layers[1].out.shape() {
        return Err(Error::DimensionMismatch(format!(
            "dlogits {:?}, expected {:?}",
            dlogits.shape(),
            tape.layers[1].out.shape()
        )));
    }
    if tape.x.rows() != graph.n_nodes() || tape.layers[0].alpha.len() != graph.n_edges() {
        return Err(Error::DimensionMismatch("tape does not match graph".into()));
    }
    check_layer(l0, tape.x.cols(), edge_features, 0)?;
    check_layer(l1, l0.out_dim(), edge_features, 1)?;
    let slope = params.leaky_slope;

    let (dw1, da1, dwe1, dh) = layer_backward(
        graph,
        edge_features,
        &tape.hidden,
        l1,
        slope,
        &tape.layers[1],
        dlogits,
        true,
    );
    let mut dout0 = dh.expect("requested");
    for (d, &v) in dout0.as_mut_slice().iter_mut().zip(tape.layers[0].out.as_slice()) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    let (dw0, da0, dwe0, _) = layer_backward(
        graph,
        edge_features,
        &tape.x,
        l0,
        slope,
        &tape.layers[0],
        &dout0,
        false,
    );
    Ok(GatParams {
        layers: [
            GatLayer {
                w: dw0,
                a: da0,
                we: dwe0,
            },
            GatLayer {
                w: dw1,
                a: da1,
                we: dwe1,
            },
        ],
        leaky_slope: slope,
    })
}
