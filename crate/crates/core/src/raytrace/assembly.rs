use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AsphericSurface, Material, Vec3};

/// One optical element in the train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Element {
    /// A glass element bounded by two surfaces. `decenter` shifts the element
    /// transversely (mm).
    Lens {
        front: AsphericSurface,
        back: AsphericSurface,
        material: Material,
        decenter: [f64; 2],
    },
    /// A perfect thin lens at axial position `z`.
    IdealLens {
        z: f64,
        focal_length: f64,
        clear_semi_diameter: f64,
    },
}

impl Element {
    pub fn lens(front: AsphericSurface, back: AsphericSurface, material: Material) -> Self {
        Element::Lens {
            front,
            back,
            material,
            decenter: [0.0, 0.0],
        }
    }

    pub fn front_z(&self) -> f64 {
        match self {
            Element::Lens { front, .. } => front.vertex_z,
            Element::IdealLens { z, .. } => *z,
        }
    }

    pub fn back_z(&self) -> f64 {
        match self {
            Element::Lens { back, .. } => back.vertex_z,
            Element::IdealLens { z, .. } => *z,
        }
    }

    /// Translate the element along the axis.
    pub fn shift(&mut self, dz: f64) {
        match self {
            Element::Lens { front, back, .. } => {
                front.vertex_z += dz;
                back.vertex_z += dz;
            }
            Element::IdealLens { z, .. } => *z += dz,
        }
    }

    /// Axial extent of the element surfaces over their apertures.
    fn axial_extent(&self) -> (f64, f64) {
        match self {
            Element::Lens { front, back, .. } => {
                let (a, _) = surface_range(front);
                let (_, d) = surface_range(back);
                (a, d)
            }
            Element::IdealLens { z, .. } => (*z, *z),
        }
    }
}

/// Minimum and maximum absolute z of a surface over its clear aperture.
pub(crate) fn surface_range(s: &AsphericSurface) -> (f64, f64) {
    let mut lo = s.vertex_z;
    let mut hi = s.vertex_z;
    for i in 0..=256 {
        let r = s.clear_semi_diameter * i as f64 / 256.0;
        if let Ok(z) = s.sag_unchecked(r) {
            lo = lo.min(s.vertex_z + z);
            hi = hi.max(s.vertex_z + z);
        }
    }
    (lo, hi)
}

/// Ordered elements plus the object point. The ambient medium is vacuum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalAssembly {
    pub elements: Vec<Element>,
    pub object: Vec3,
    /// Default evaluation plane.
    pub image_z: f64,
}

impl OpticalAssembly {
    pub fn new(elements: Vec<Element>, object: Vec3, image_z: f64) -> Result<Self> {
        let asm = Self {
            elements,
            object,
            image_z,
        };
        asm.validate()?;
        Ok(asm)
    }

    pub fn empty(object: Vec3, image_z: f64) -> Self {
        Self {
            elements: Vec::new(),
            object,
            image_z,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev_back: Option<f64> = None;
        for (i, el) in self.elements.iter().enumerate() {
            if let Element::Lens { front, back, .. } = el {
                if back.vertex_z <= front.vertex_z {
                    return Err(Error::InvalidAssembly(format!(
                        "element {i}: back vertex not downstream of front vertex"
                    )));
                }
                // glass thickness must stay positive across the common aperture
                let rmax = front.clear_semi_diameter.min(back.clear_semi_diameter);
                for k in 0..=64 {
                    let r = rmax * k as f64 / 64.0;
                    if let (Ok(a), Ok(b)) = (front.sag_unchecked(r), back.sag_unchecked(r)) {
                        if back.vertex_z + b <= front.vertex_z + a {
                            return Err(Error::InvalidAssembly(format!(
                                "element {i}: surfaces cross at r = {r:.3} mm"
                            )));
                        }
                    }
                }
            }
            let (lo, hi) = el.axial_extent();
            if let Some(p) = prev_back {
                if el.front_z() <= p || lo < p {
                    return Err(Error::InvalidAssembly(format!(
                        "element {i} overlaps its predecessor"
                    )));
                }
            }
            prev_back = Some(hi.max(el.back_z()));
        }
        if let Some(first) = self.elements.first() {
            if first.front_z() <= self.object.z {
                return Err(Error::InvalidAssembly("object lies inside the train".into()));
            }
        }
        Ok(())
    }

    /// Distance from the object to the first surface vertex.
    pub fn working_distance(&self) -> Option<f64> {
        self.elements.first().map(|e| e.front_z() - self.object.z)
    }

    pub fn last_vertex_z(&self) -> f64 {
        self.elements
            .last()
            .map(|e| e.back_z())
            .unwrap_or(self.object.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_overlap_and_inverted_elements() {
        let glass = Material::constant("g", 1.5);
        let a = Element::lens(
            AsphericSurface::plane(1.0, 5.0),
            AsphericSurface::plane(2.0, 5.0),
            glass.clone(),
        );
        let b = Element::lens(
            AsphericSurface::plane(1.5, 5.0),
            AsphericSurface::plane(3.0, 5.0),
            glass.clone(),
        );
        assert!(OpticalAssembly::new(vec![a.clone(), b], Vec3::zeros(), 10.0).is_err());
        let inverted = Element::lens(
            AsphericSurface::plane(2.0, 5.0),
            AsphericSurface::plane(1.0, 5.0),
            glass.clone(),
        );
        assert!(OpticalAssembly::new(vec![inverted], Vec3::zeros(), 10.0).is_err());
        // biconvex sphere pair that crosses at the rim
        let crossing = Element::lens(
            AsphericSurface::sphere(1.0, 5.0, 4.9),
            AsphericSurface::sphere(2.0, -5.0, 4.9),
            glass,
        );
        assert!(OpticalAssembly::new(vec![crossing], Vec3::zeros(), 10.0).is_err());
        assert!(OpticalAssembly::new(vec![a], Vec3::zeros(), 10.0).is_ok());
    }
}
