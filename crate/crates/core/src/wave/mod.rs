//! Scalar diffraction from traced pupils: pupil sampling, Zernike analysis,
//! PSFs, enclosed energy and synthetic surface errors.

mod enclosed;
mod psf;
mod pupil;
mod surface_error;
mod zernike;

pub use enclosed::{enclosed_fraction, EnclosedCurve};
pub(crate) use psf::pupil_power;
pub use psf::{airy_radius_um, focal_field, psf, psf_zoom, strehl, FocalField, IntensityImage};
pub use pupil::{build_pupil, Apodization, PupilField};
pub use surface_error::{surface_error_map, SurfaceErrorMap};
pub use zernike::{noll_to_nm, zernike, zernike_fit, ZernikeFit};
