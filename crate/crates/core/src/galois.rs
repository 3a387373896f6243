//! Finite-field arithmetic over a runtime-selected field.
//!
//! Two families are supported:
//!
//! - prime fields `GF(p)` for any prime `p < 2^32`, with plain modular
//!   arithmetic; small primes make hand-checkable test vectors possible;
//! - binary extension fields `GF(2^w)` for `2 <= w <= 16`, backed by
//!   log/antilog tables built from a fixed primitive polynomial.
//!
//! A [`Field`] is cheap to clone (the tables live behind an `Arc`) and every
//! [`Elem`] is a plain canonical integer, so both are `Send + Sync`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("field order {0} is not a prime power")]
    NotPrimePower(u64),
    #[error(
        "field order {0} is a prime power but not a supported field (prime or 2^w, 2 <= w <= 16)"
    )]
    Unsupported(u64),
    #[error("{hint} is not a primitive element of GF({order})")]
    NotPrimitive { hint: u32, order: u32 },
    #[error("value {value} is out of range for GF({order})")]
    OutOfRange { value: u64, order: u32 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("truncated symbol: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
}

/// A field element in canonical form: the residue for prime fields, the
/// polynomial bit pattern for binary fields.
#[derive(Copy, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Elem(u32);

impl Elem {
    pub const ZERO: Elem = Elem(0);
    pub const ONE: Elem = Elem(1);

    pub fn value(self) -> u32 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Debug for Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Binary operations exposed through [`Field::apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    /// `a^b`, reading `b` as a non-negative integer exponent.
    Pow,
    /// Inverse of `a`; `b` is ignored.
    Inv,
}

// Primitive polynomials for GF(2^w), indexed by w.
const PRIMITIVE_POLYS: [u32; 17] = [
    0, 0, 0x7, 0xB, 0x13, 0x25, 0x43, 0x89, 0x11D, 0x211, 0x409, 0x805, 0x1053, 0x201B, 0x4443,
    0x8003, 0x1100B,
];

enum Repr {
    Prime {
        p: u32,
    },
    Binary {
        width: u32,
        poly: u32,
        /// exp[i] = g^i for i in 0..2(q-1), doubled so products skip a modulo.
        exp: Vec<u32>,
        log: Vec<u32>,
    },
}

struct Inner {
    order: u32,
    generator: Elem,
    /// Distinct prime factors of q - 1.
    group_factors: Vec<u64>,
    repr: Repr,
}

#[derive(Clone)]
pub struct Field(Arc<Inner>);

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.repr {
            Repr::Prime { p } => write!(f, "GF({p})"),
            Repr::Binary { width, poly, .. } => write!(f, "GF(2^{width}; poly={poly:#x})"),
        }
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.0.order == other.0.order && self.0.generator == other.0.generator
    }
}

impl Eq for Field {}

impl Field {
    /// Builds `GF(order)` with a verified primitive element.
    ///
    /// Without a hint the smallest primitive element is chosen for prime
    /// fields and `x` (the value 2) for binary fields.
    pub fn new(order: u64, generator_hint: Option<u32>) -> Result<Field, FieldError> {
        if order < 2 {
            return Err(FieldError::NotPrimePower(order));
        }
        let repr = if is_prime(order) {
            if order > u32::MAX as u64 {
                return Err(FieldError::Unsupported(order));
            }
            Repr::Prime { p: order as u32 }
        } else if order.is_power_of_two() {
            let width = order.trailing_zeros();
            if width > 16 {
                return Err(FieldError::Unsupported(order));
            }
            binary_tables(width)
        } else if prime_power_base(order).is_some() {
            return Err(FieldError::Unsupported(order));
        } else {
            return Err(FieldError::NotPrimePower(order));
        };
        let order = order as u32;
        let group_factors = distinct_prime_factors(order as u64 - 1);
        let mut inner = Inner {
            order,
            generator: Elem::ONE,
            group_factors,
            repr,
        };
        let generator = match generator_hint {
            Some(hint) => {
                if hint >= order || !is_primitive(&inner, Elem(hint)) {
                    return Err(FieldError::NotPrimitive { hint, order });
                }
                Elem(hint)
            }
            None => match inner.repr {
                Repr::Binary { .. } => Elem(2),
                Repr::Prime { .. } => (1..order)
                    .map(Elem)
                    .find(|&g| is_primitive(&inner, g))
                    .expect("every prime field has a primitive element"),
            },
        };
        inner.generator = generator;
        Ok(Field(Arc::new(inner)))
    }

    /// The default field for real payloads.
    pub fn gf65536() -> Field {
        Field::new(1 << 16, None).expect("GF(2^16) is supported")
    }

    pub fn order(&self) -> u32 {
        self.0.order
    }

    /// Primitive element `g`.
    pub fn generator(&self) -> Elem {
        self.0.generator
    }

    pub fn is_binary(&self) -> bool {
        matches!(self.0.repr, Repr::Binary { .. })
    }

    /// Wraps an integer, rejecting values outside `[0, q)`.
    pub fn elem(&self, value: u64) -> Result<Elem, FieldError> {
        if value >= self.0.order as u64 {
            return Err(FieldError::OutOfRange {
                value,
                order: self.0.order,
            });
        }
        Ok(Elem(value as u32))
    }

    /// Maps an arbitrary integer into the field: reduction mod p for prime
    /// fields, truncation to the low w bits for binary fields.
    pub fn reduce(&self, value: u64) -> Elem {
        match &self.0.repr {
            Repr::Prime { p } => Elem((value % *p as u64) as u32),
            Repr::Binary { width, .. } => Elem((value & ((1u64 << width) - 1)) as u32),
        }
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Elem {
        Elem(rng.gen_range(0..self.0.order))
    }

    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> Elem {
        Elem(rng.gen_range(1..self.0.order))
    }

    #[inline]
    pub fn add(&self, a: Elem, b: Elem) -> Elem {
        match &self.0.repr {
            Repr::Prime { p } => Elem(((a.0 as u64 + b.0 as u64) % *p as u64) as u32),
            Repr::Binary { .. } => Elem(a.0 ^ b.0),
        }
    }

    #[inline]
    pub fn sub(&self, a: Elem, b: Elem) -> Elem {
        match &self.0.repr {
            Repr::Prime { p } => {
                let p = *p as u64;
                Elem(((a.0 as u64 + p - b.0 as u64) % p) as u32)
            }
            Repr::Binary { .. } => Elem(a.0 ^ b.0),
        }
    }

    #[inline]
    pub fn neg(&self, a: Elem) -> Elem {
        self.sub(Elem::ZERO, a)
    }

    #[inline]
    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        match &self.0.repr {
            Repr::Prime { p } => Elem(((a.0 as u64 * b.0 as u64) % *p as u64) as u32),
            Repr::Binary { exp, log, .. } => {
                if a.0 == 0 || b.0 == 0 {
                    Elem::ZERO
                } else {
                    Elem(exp[(log[a.0 as usize] + log[b.0 as usize]) as usize])
                }
            }
        }
    }

    pub fn inv(&self, a: Elem) -> Result<Elem, FieldError> {
        if a.is_zero() {
            return Err(FieldError::DivisionByZero);
        }
        Ok(match &self.0.repr {
            Repr::Prime { p } => self.pow(a, *p as u64 - 2),
            Repr::Binary { exp, log, .. } => {
                let q1 = self.0.order - 1;
                Elem(exp[((q1 - log[a.0 as usize]) % q1) as usize])
            }
        })
    }

    pub fn div(&self, a: Elem, b: Elem) -> Result<Elem, FieldError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: Elem, e: u64) -> Elem {
        if e == 0 {
            return Elem::ONE;
        }
        if a.is_zero() {
            return Elem::ZERO;
        }
        match &self.0.repr {
            Repr::Binary { exp, log, .. } => {
                let q1 = (self.0.order - 1) as u64;
                let l = (log[a.0 as usize] as u64 * (e % q1)) % q1;
                Elem(exp[l as usize])
            }
            Repr::Prime { .. } => {
                let mut base = a;
                let mut acc = Elem::ONE;
                let mut e = e;
                while e > 0 {
                    if e & 1 == 1 {
                        acc = self.mul(acc, base);
                    }
                    base = self.mul(base, base);
                    e >>= 1;
                }
                acc
            }
        }
    }

    pub fn apply(&self, op: Op, a: Elem, b: Elem) -> Result<Elem, FieldError> {
        match op {
            Op::Add => Ok(self.add(a, b)),
            Op::Sub => Ok(self.sub(a, b)),
            Op::Mul => Ok(self.mul(a, b)),
            Op::Div => self.div(a, b),
            Op::Pow => Ok(self.pow(a, b.0 as u64)),
            Op::Inv => self.inv(a),
        }
    }

    /// Multiplicative order of a nonzero element.
    pub fn multiplicative_order(&self, a: Elem) -> Option<u64> {
        if a.is_zero() {
            return None;
        }
        let mut ord = (self.0.order - 1) as u64;
        for &f in &self.0.group_factors {
            while ord.is_multiple_of(f) && self.pow(a, ord / f) == Elem::ONE {
                ord /= f;
            }
        }
        Some(ord)
    }

    /// Dot product of two equal-length slices.
    #[inline]
    pub fn dot(&self, a: &[Elem], b: &[Elem]) -> Elem {
        debug_assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .fold(Elem::ZERO, |acc, (&x, &y)| self.add(acc, self.mul(x, y)))
    }

    /// Bytes per serialized symbol (little-endian).
    pub fn symbol_width(&self) -> usize {
        let bits = 32 - (self.0.order - 1).leading_zeros();
        (bits as usize).div_ceil(8).max(1)
    }

    /// Payload bits a symbol can carry without exceeding the field order.
    pub fn data_bits(&self) -> u32 {
        31 - self.0.order.leading_zeros()
    }

    pub fn write_symbol(&self, e: Elem, out: &mut Vec<u8>) {
        out.extend_from_slice(&e.0.to_le_bytes()[..self.symbol_width()]);
    }

    pub fn read_symbol(&self, bytes: &[u8]) -> Result<Elem, FieldError> {
        let w = self.symbol_width();
        if bytes.len() < w {
            return Err(FieldError::Truncated {
                need: w,
                have: bytes.len(),
            });
        }
        let mut buf = [0u8; 4];
        buf[..w].copy_from_slice(&bytes[..w]);
        self.elem(u32::from_le_bytes(buf) as u64)
    }
}

fn is_primitive(inner: &Inner, g: Elem) -> bool {
    if g.is_zero() {
        return false;
    }
    let field = FieldRef(inner);
    let q1 = (inner.order - 1) as u64;
    inner
        .group_factors
        .iter()
        .all(|&f| field.pow(g, q1 / f) != Elem::ONE)
}

// Borrowed view used while the Arc is still under construction.
struct FieldRef<'a>(&'a Inner);

impl FieldRef<'_> {
    fn mul(&self, a: Elem, b: Elem) -> Elem {
        match &self.0.repr {
            Repr::Prime { p } => Elem(((a.0 as u64 * b.0 as u64) % *p as u64) as u32),
            Repr::Binary { exp, log, .. } => {
                if a.0 == 0 || b.0 == 0 {
                    Elem::ZERO
                } else {
                    Elem(exp[(log[a.0 as usize] + log[b.0 as usize]) as usize])
                }
            }
        }
    }

    fn pow(&self, a: Elem, mut e: u64) -> Elem {
        let mut base = a;
        let mut acc = Elem::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }
}

fn binary_tables(width: u32) -> Repr {
    let poly = PRIMITIVE_POLYS[width as usize];
    let q = 1u32 << width;
    let q1 = (q - 1) as usize;
    let mut exp = vec![0u32; 2 * q1];
    let mut log = vec![0u32; q as usize];
    let mut x = 1u32;
    for (i, slot) in exp.iter_mut().take(q1).enumerate() {
        *slot = x;
        log[x as usize] = i as u32;
        x <<= 1;
        if x & q != 0 {
            x ^= poly;
        }
        debug_assert!(
            i + 1 == q1 || x != 1,
            "polynomial {poly:#x} is not primitive"
        );
    }
    assert_eq!(x, 1, "polynomial {poly:#x} is not primitive");
    for i in q1..2 * q1 {
        exp[i] = exp[i - q1];
    }
    Repr::Binary {
        width,
        poly,
        exp,
        log,
    }
}

pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

fn prime_power_base(n: u64) -> Option<u64> {
    let f = distinct_prime_factors(n);
    (f.len() == 1).then(|| f[0])
}

fn distinct_prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}
