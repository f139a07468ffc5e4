//! Browser front end to the WIPP model on a single grid: draw a
//! transmissivity field (conditioned on the boreholes or not), show the
//! kriging mean and standard deviation, and solve for head and the particle
//! path on one draw.
//!
//! [`Explorer`] holds the logic and is usable natively; [`Demo`] is the thin
//! wasm-bindgen wrapper the page talks to. Seeds are `u32` so JavaScript can
//! pass plain numbers.

use wasm_bindgen::prelude::*;

use wipp_mlmc::error::Result;
use wipp_mlmc::mlmc::wipp::{ModelSetup, WippSampler};
use wipp_mlmc::stream::{Role, StreamId};
use wipp_mlmc::transport::Termination;

pub struct Explorer {
    cond: WippSampler,
    uncond: WippSampler,
}

/// Head, field and particle track of one draw.
#[wasm_bindgen]
pub struct Flow {
    field: Vec<f64>,
    head: Vec<f64>,
    path: Vec<f64>,
    years: f64,
    exited: bool,
}

#[wasm_bindgen]
impl Flow {
    /// log10 T per cell, row-major from the south-west corner.
    pub fn field(&self) -> Vec<f64> {
        self.field.clone()
    }

    pub fn head(&self) -> Vec<f64> {
        self.head.clone()
    }

    /// Interleaved `x, y` of every face crossing, release point first.
    pub fn path(&self) -> Vec<f64> {
        self.path.clone()
    }

    pub fn years(&self) -> f64 {
        self.years
    }

    /// Whether the particle reached the site boundary.
    pub fn exited(&self) -> bool {
        self.exited
    }
}

impl Explorer {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            cond: WippSampler::new(ModelSetup::wipp(n, 0, true)?)?,
            uncond: WippSampler::new(ModelSetup::wipp(n, 0, false)?)?,
        })
    }

    fn sampler(&self, conditional: bool) -> &WippSampler {
        if conditional {
            &self.cond
        } else {
            &self.uncond
        }
    }

    pub fn n(&self) -> usize {
        self.cond.setup().n0
    }

    /// Domain box, site box and release point:
    /// `[x0, y0, x1, y1, sx0, sy0, sx1, sy1, rx, ry]`.
    pub fn geometry(&self) -> Vec<f64> {
        let d = &self.cond.setup().domain;
        let (b, s) = (d.bounds(), d.inner());
        vec![b.x_min, b.y_min, b.x_max, b.y_max, s.x_min, s.y_min, s.x_max, s.y_max, d.release.x, d.release.y]
    }

    /// Interleaved `x, y, log10 T` of the boreholes.
    pub fn boreholes(&self) -> Vec<f64> {
        self.cond.setup().observations.records.iter().flat_map(|r| [r.easting, r.northing, r.log10_t]).collect()
    }

    pub fn field(&self, seed: u32, conditional: bool) -> Result<Vec<f64>> {
        let s = self.sampler(conditional);
        let c = s.realizations(0, StreamId::new(Role::Inspect, 0, 0), seed.into())?;
        Ok(c[0].fine().to_vec())
    }

    /// Kriging mean followed by kriging standard deviation, one value per cell each.
    pub fn kriging(&self) -> Result<Vec<f64>> {
        let (mut mean, var) = self.cond.setup().kriging_map(0)?;
        mean.extend(var.iter().map(|v| v.max(0.0).sqrt()));
        Ok(mean)
    }

    pub fn flow(&self, seed: u32, conditional: bool) -> Result<Flow> {
        let s = self.sampler(conditional);
        let field = self.field(seed, conditional)?;
        let grid = s.setup().grid(0)?;
        let (sol, tr) = s.setup().evaluate(&grid, &field, true)?;
        Ok(Flow {
            path: tr.path.unwrap_or_default().iter().flat_map(|p| [p.x, p.y]).collect(),
            head: sol.head,
            field,
            years: tr.time,
            exited: tr.termination == Termination::ExitedInnerBoundary,
        })
    }
}

fn js(e: wipp_mlmc::error::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo(Explorer);

#[wasm_bindgen]
impl Demo {
    /// Model on an `n × n` grid; `n` between 4 and 128 keeps the page responsive.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize) -> std::result::Result<Demo, JsError> {
        Explorer::new(n).map(Demo).map_err(js)
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn geometry(&self) -> Vec<f64> {
        self.0.geometry()
    }

    pub fn boreholes(&self) -> Vec<f64> {
        self.0.boreholes()
    }

    pub fn field(&self, seed: u32, conditional: bool) -> std::result::Result<Vec<f64>, JsError> {
        self.0.field(seed, conditional).map_err(js)
    }

    pub fn kriging(&self) -> std::result::Result<Vec<f64>, JsError> {
        self.0.kriging().map_err(js)
    }

    pub fn flow(&self, seed: u32, conditional: bool) -> std::result::Result<Flow, JsError> {
        self.0.flow(seed, conditional).map_err(js)
    }
}
