use std::ops::{Add, AddAssign, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use super::emotion::{Emotion, EmotionDistribution};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A point in valence / arousal / dominance space.
///
/// Lexicon entries live in `[0, 1]^3`; goal and remaining-budget vectors are
/// sums of entries and may leave the cube.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct VadVector<T: Scalar> {
    pub v: T,
    pub a: T,
    pub d: T,
}

impl<T: Scalar> VadVector<T> {
    pub fn new(v: T, a: T, d: T) -> Self {
        Self { v, a, d }
    }

    pub fn zero() -> Self {
        Self::splat(T::zero())
    }

    pub fn splat(x: T) -> Self {
        Self { v: x, a: x, d: x }
    }

    pub fn neutral() -> Self {
        Self::splat(T::of(0.5))
    }

    /// A vector that must lie in the unit cube, as lexicon entries and
    /// human judgments do.
    pub fn bounded(v: T, a: T, d: T) -> Result<Self> {
        let x = Self { v, a, d };
        if x.in_unit_cube() {
            Ok(x)
        } else {
            Err(Error::InvalidVad(format!("[{v}, {a}, {d}] outside [0, 1]^3")))
        }
    }

    pub fn in_unit_cube(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite() && *x >= T::zero() && *x <= T::one())
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.a.is_finite() && self.d.is_finite()
    }

    pub fn to_array(self) -> [T; 3] {
        [self.v, self.a, self.d]
    }

    pub fn from_array(x: [T; 3]) -> Self {
        Self { v: x[0], a: x[1], d: x[2] }
    }

    pub fn scale(self, k: T) -> Self {
        Self { v: self.v * k, a: self.a * k, d: self.d * k }
    }

    pub fn norm(self) -> T {
        (self.v * self.v + self.a * self.a + self.d * self.d).sqrt()
    }

    pub fn cast<U: Scalar>(self) -> VadVector<U> {
        VadVector { v: U::of(self.v.as_f64()), a: U::of(self.a.as_f64()), d: U::of(self.d.as_f64()) }
    }
}

impl<T: Scalar> Add for VadVector<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, a: self.a + o.a, d: self.d + o.d }
    }
}

impl<T: Scalar> Sub for VadVector<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { v: self.v - o.v, a: self.a - o.a, d: self.d - o.d }
    }
}

impl<T: Scalar> AddAssign for VadVector<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Scalar> SubAssign for VadVector<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Scalar> std::iter::Sum for VadVector<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |acc, x| acc + x)
    }
}

/// Euclidean distance in VAD space.
pub fn vad_distance<T: Scalar>(x: &VadVector<T>, y: &VadVector<T>) -> T {
    (*x - *y).norm()
}

/// The fixed 3x6 map from emotion distributions to VAD space.
///
/// Columns follow [`Emotion::ALL`]; rows are valence, arousal and dominance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionVadMap;

impl EmotionVadMap {
    pub const MATRIX: [[f64; 6]; 3] = [
        [0.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 1.0, 0.0, 1.0, 0.5],
        [1.0, 0.0, 1.0, 0.0, 0.0, 0.5],
    ];

    pub fn column<T: Scalar>(e: Emotion) -> VadVector<T> {
        let j = e.index();
        VadVector::new(T::of(Self::MATRIX[0][j]), T::of(Self::MATRIX[1][j]), T::of(Self::MATRIX[2][j]))
    }

    pub fn apply<T: Scalar>(e: &EmotionDistribution<T>) -> VadVector<T> {
        let p = e.probs();
        let row = |r: usize| (0..6).map(|j| T::of(Self::MATRIX[r][j]) * p[j]).sum::<T>();
        VadVector::new(row(0), row(1), row(2))
    }
}

/// `M_VAD · e`.
pub fn emotion_to_vad<T: Scalar>(e: &EmotionDistribution<T>) -> VadVector<T> {
    EmotionVadMap::apply(e)
}
