//! Closed catalog of the functions `f` and `h` entering `S = ∫ f(s) h(φ) ωᵐ`.
//!
//! Every entry carries exact first and second derivatives. Text form:
//!
//! ```text
//! const:<c>  id  affine:<a>:<b>  pow:<p>  exp  log
//! scaled:<c>:<inner>  comp:<a>:<b>:<inner>  sum(<inner>,<inner>)
//! ```
//!
//! `comp:a:b:g` is `z ↦ g(a z + b)`. Constants may be complex (`1+2i`);
//! `p`, and the `comp` coefficients are real.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionDescriptor {
    Constant(Complex64),
    Identity,
    Affine {
        a: Complex64,
        b: Complex64,
    },
    Power(f64),
    Exponential,
    /// `log z`, defined only for real `z > 0`.
    LogGuarded,
    Scaled(Complex64, Box<FunctionDescriptor>),
    Sum(Box<FunctionDescriptor>, Box<FunctionDescriptor>),
    ComposedWithAffine {
        inner: Box<FunctionDescriptor>,
        a: f64,
        b: f64,
    },
}

/// Why a catalog function could not be evaluated or inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogError {
    Domain,
    NotInvertible,
    OutOfRange,
}

type Eval = Result<Complex64, CatalogError>;

fn real(z: Complex64) -> Option<f64> {
    (z.im == 0.0).then_some(z.re)
}

fn is_integer(p: f64) -> bool {
    p.fract() == 0.0 && p.abs() < 1e9
}

impl FunctionDescriptor {
    pub fn constant(c: f64) -> Self {
        FunctionDescriptor::Constant(Complex64::new(c, 0.0))
    }

    pub fn affine(a: f64, b: f64) -> Self {
        FunctionDescriptor::Affine {
            a: Complex64::new(a, 0.0),
            b: Complex64::new(b, 0.0),
        }
    }

    pub fn scaled(c: f64, inner: FunctionDescriptor) -> Self {
        FunctionDescriptor::Scaled(Complex64::new(c, 0.0), Box::new(inner))
    }

    pub fn sum(a: FunctionDescriptor, b: FunctionDescriptor) -> Self {
        FunctionDescriptor::Sum(Box::new(a), Box::new(b))
    }

    pub fn composed(inner: FunctionDescriptor, a: f64, b: f64) -> Self {
        FunctionDescriptor::ComposedWithAffine {
            inner: Box::new(inner),
            a,
            b,
        }
    }

    /// True when every parameter is real, i.e. the function maps reals to reals.
    pub fn is_real(&self) -> bool {
        use FunctionDescriptor::*;
        match self {
            Constant(c) => c.im == 0.0,
            Affine { a, b } => a.im == 0.0 && b.im == 0.0,
            Identity | Power(_) | Exponential | LogGuarded => true,
            Scaled(c, inner) => c.im == 0.0 && inner.is_real(),
            Sum(a, b) => a.is_real() && b.is_real(),
            ComposedWithAffine { inner, .. } => inner.is_real(),
        }
    }

    /// True when the derivative does not depend on the argument.
    pub fn derivative_is_constant(&self) -> bool {
        use FunctionDescriptor::*;
        match self {
            Constant(_) | Identity | Affine { .. } => true,
            Power(p) => *p == 0.0 || *p == 1.0,
            Exponential | LogGuarded => false,
            Scaled(c, inner) => *c == Complex64::new(0.0, 0.0) || inner.derivative_is_constant(),
            Sum(a, b) => a.derivative_is_constant() && b.derivative_is_constant(),
            ComposedWithAffine { inner, a, .. } => *a == 0.0 || inner.derivative_is_constant(),
        }
    }

    pub fn is_constant(&self) -> bool {
        use FunctionDescriptor::*;
        match self {
            Constant(_) => true,
            Affine { a, .. } => *a == Complex64::new(0.0, 0.0),
            Power(p) => *p == 0.0,
            Identity | Exponential | LogGuarded => false,
            Scaled(c, inner) => *c == Complex64::new(0.0, 0.0) || inner.is_constant(),
            Sum(a, b) => a.is_constant() && b.is_constant(),
            ComposedWithAffine { inner, a, .. } => *a == 0.0 || inner.is_constant(),
        }
    }

    pub fn eval(&self, z: Complex64) -> Eval {
        self.jet(z, 0)
    }

    pub fn derivative(&self, z: Complex64) -> Eval {
        self.jet(z, 1)
    }

    pub fn second_derivative(&self, z: Complex64) -> Eval {
        self.jet(z, 2)
    }

    /// Evaluates at a real argument and requires a real result.
    pub fn eval_real(&self, x: f64) -> Result<f64, CatalogError> {
        let v = self.eval(Complex64::new(x, 0.0))?;
        real(v).ok_or(CatalogError::Domain)
    }

    pub fn derivative_real(&self, x: f64) -> Result<f64, CatalogError> {
        let v = self.derivative(Complex64::new(x, 0.0))?;
        real(v).ok_or(CatalogError::Domain)
    }

    pub fn second_derivative_real(&self, x: f64) -> Result<f64, CatalogError> {
        let v = self.second_derivative(Complex64::new(x, 0.0))?;
        real(v).ok_or(CatalogError::Domain)
    }

    /// The `order`-th derivative (0, 1 or 2) at `z`.
    fn jet(&self, z: Complex64, order: u8) -> Eval {
        use FunctionDescriptor::*;
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        match self {
            Constant(c) => Ok(if order == 0 { *c } else { zero }),
            Identity => Ok(match order {
                0 => z,
                1 => one,
                _ => zero,
            }),
            Affine { a, b } => Ok(match order {
                0 => a * z + b,
                1 => *a,
                _ => zero,
            }),
            Power(p) => power_jet(*p, z, order),
            Exponential => Ok(z.exp()),
            LogGuarded => {
                let x = real(z).filter(|x| *x > 0.0).ok_or(CatalogError::Domain)?;
                Ok(Complex64::new(
                    match order {
                        0 => x.ln(),
                        1 => 1.0 / x,
                        _ => -1.0 / (x * x),
                    },
                    0.0,
                ))
            }
            Scaled(c, inner) => Ok(c * inner.jet(z, order)?),
            Sum(a, b) => Ok(a.jet(z, order)? + b.jet(z, order)?),
            ComposedWithAffine { inner, a, b } => {
                let v = inner.jet(z * *a + *b, order)?;
                Ok(v * a.powi(order as i32))
            }
        }
    }

    /// Inverse of the function itself, for the monotone entries.
    pub fn inverse(&self, y: f64) -> Result<f64, CatalogError> {
        use FunctionDescriptor::*;
        match self {
            Identity => Ok(y),
            Affine { a, b } => {
                let (a, b) = (
                    real(*a).ok_or(CatalogError::NotInvertible)?,
                    real(*b).ok_or(CatalogError::NotInvertible)?,
                );
                if a == 0.0 {
                    return Err(CatalogError::NotInvertible);
                }
                Ok((y - b) / a)
            }
            Power(p) => root(y, *p),
            Exponential => {
                if y > 0.0 {
                    Ok(y.ln())
                } else {
                    Err(CatalogError::OutOfRange)
                }
            }
            LogGuarded => Ok(y.exp()),
            Scaled(c, inner) => {
                let c = real(*c)
                    .filter(|c| *c != 0.0)
                    .ok_or(CatalogError::NotInvertible)?;
                inner.inverse(y / c)
            }
            ComposedWithAffine { inner, a, b } => {
                if *a == 0.0 {
                    return Err(CatalogError::NotInvertible);
                }
                Ok((inner.inverse(y)? - b) / a)
            }
            Constant(_) | Sum(..) => Err(CatalogError::NotInvertible),
        }
    }

    /// Whether [`derivative_inverse`](Self::derivative_inverse) is available.
    pub fn has_derivative_inverse(&self) -> bool {
        use FunctionDescriptor::*;
        match self {
            Power(p) => *p != 0.0 && *p != 1.0,
            Exponential | LogGuarded => true,
            Scaled(c, inner) => c.im == 0.0 && c.re != 0.0 && inner.has_derivative_inverse(),
            ComposedWithAffine { inner, a, .. } => *a != 0.0 && inner.has_derivative_inverse(),
            _ => false,
        }
    }

    /// Inverse of `f′` on the branch where it is strictly monotone.
    ///
    /// `pow:p` inverts over all reals when `p − 1` is an odd integer and over
    /// `z > 0` otherwise.
    pub fn derivative_inverse(&self, y: f64) -> Result<f64, CatalogError> {
        use FunctionDescriptor::*;
        match self {
            Power(p) => {
                let p = *p;
                if p == 0.0 || p == 1.0 {
                    return Err(CatalogError::NotInvertible);
                }
                // f′(z) = p z^{p−1}
                root(y / p, p - 1.0)
            }
            Exponential => {
                if y > 0.0 {
                    Ok(y.ln())
                } else {
                    Err(CatalogError::OutOfRange)
                }
            }
            LogGuarded => {
                if y > 0.0 {
                    Ok(1.0 / y)
                } else {
                    Err(CatalogError::OutOfRange)
                }
            }
            Scaled(c, inner) => {
                let c = real(*c)
                    .filter(|c| *c != 0.0)
                    .ok_or(CatalogError::NotInvertible)?;
                inner.derivative_inverse(y / c)
            }
            ComposedWithAffine { inner, a, b } => {
                if *a == 0.0 {
                    return Err(CatalogError::NotInvertible);
                }
                Ok((inner.derivative_inverse(y / a)? - b) / a)
            }
            _ => Err(CatalogError::NotInvertible),
        }
    }
}

fn power_jet(p: f64, z: Complex64, order: u8) -> Eval {
    let coeff = match order {
        0 => 1.0,
        1 => p,
        _ => p * (p - 1.0),
    };
    let e = p - order as f64;
    if coeff == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if is_integer(p) {
        if z == Complex64::new(0.0, 0.0) && e < 0.0 {
            return Err(CatalogError::Domain);
        }
        Ok(z.powi(e as i32) * coeff)
    } else {
        let x = real(z).filter(|x| *x > 0.0).ok_or(CatalogError::Domain)?;
        Ok(Complex64::new(coeff * x.powf(e), 0.0))
    }
}

/// Real solution of `z^q = y` on the monotone branch.
fn root(y: f64, q: f64) -> Result<f64, CatalogError> {
    if q == 0.0 {
        return Err(CatalogError::NotInvertible);
    }
    let odd = is_integer(q) && (q as i64) % 2 != 0;
    if odd {
        Ok(y.signum() * y.abs().powf(1.0 / q))
    } else if y > 0.0 {
        Ok(y.powf(1.0 / q))
    } else {
        Err(CatalogError::OutOfRange)
    }
}

fn fmt_complex(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else {
        format!("{c}")
    }
}

impl fmt::Display for FunctionDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use FunctionDescriptor::*;
        match self {
            Constant(c) => write!(f, "const:{}", fmt_complex(*c)),
            Identity => write!(f, "id"),
            Affine { a, b } => write!(f, "affine:{}:{}", fmt_complex(*a), fmt_complex(*b)),
            Power(p) => write!(f, "pow:{p}"),
            Exponential => write!(f, "exp"),
            LogGuarded => write!(f, "log"),
            Scaled(c, inner) => write!(f, "scaled:{}:{inner}", fmt_complex(*c)),
            Sum(a, b) => write!(f, "sum({a},{b})"),
            ComposedWithAffine { inner, a, b } => write!(f, "comp:{a}:{b}:{inner}"),
        }
    }
}

fn parse_complex(s: &str) -> Result<Complex64, Error> {
    s.parse::<Complex64>()
        .ok()
        .filter(|c| c.re.is_finite() && c.im.is_finite())
        .ok_or_else(|| Error::Parse(format!("bad number `{s}`")))
}

fn parse_real(s: &str) -> Result<f64, Error> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse(format!("bad real number `{s}`")))
}

fn split_arg(s: &str) -> Result<(&str, &str), Error> {
    s.split_once(':')
        .ok_or_else(|| Error::Parse(format!("missing argument in `{s}`")))
}

impl FromStr for FunctionDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        use FunctionDescriptor::*;
        let s = s.trim();
        if let Some(body) = s.strip_prefix("sum(") {
            let body = body
                .strip_suffix(')')
                .ok_or_else(|| Error::Parse(format!("unclosed `sum(` in `{s}`")))?;
            let mut depth = 0i32;
            let mut split = None;
            for (i, ch) in body.char_indices() {
                match ch {
                    '(' => depth += 1,
                    ')' => depth -= 1,
                    ',' if depth == 0 => {
                        split = Some(i);
                        break;
                    }
                    _ => {}
                }
                if depth < 0 {
                    return Err(Error::Parse(format!("unbalanced parentheses in `{s}`")));
                }
            }
            let i = split.ok_or_else(|| Error::Parse(format!("`sum` needs two terms: `{s}`")))?;
            return Ok(Sum(
                Box::new(body[..i].parse()?),
                Box::new(body[i + 1..].parse()?),
            ));
        }
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        let no_args = |v: FunctionDescriptor| match rest {
            None => Ok(v),
            Some(_) => Err(Error::Parse(format!("`{head}` takes no arguments"))),
        };
        let args = || rest.ok_or_else(|| Error::Parse(format!("`{head}` needs arguments")));
        match head {
            "id" | "identity" => no_args(Identity),
            "exp" | "exponential" => no_args(Exponential),
            "log" | "log_guarded" => no_args(LogGuarded),
            "const" | "constant" => Ok(Constant(parse_complex(args()?)?)),
            "pow" | "power" => Ok(Power(parse_real(args()?)?)),
            "affine" => {
                let (a, b) = split_arg(args()?)?;
                Ok(Affine {
                    a: parse_complex(a)?,
                    b: parse_complex(b)?,
                })
            }
            "scaled" => {
                let (c, inner) = split_arg(args()?)?;
                Ok(Scaled(parse_complex(c)?, Box::new(inner.parse()?)))
            }
            "comp" => {
                let (a, rest) = split_arg(args()?)?;
                let (b, inner) = split_arg(rest)?;
                Ok(ComposedWithAffine {
                    inner: Box::new(inner.parse()?),
                    a: parse_real(a)?,
                    b: parse_real(b)?,
                })
            }
            "" => Err(Error::Parse("empty function expression".into())),
            other => Err(Error::Parse(format!("unknown function `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn parse_render_examples() {
        for text in [
            "exp",
            "pow:2",
            "const:1",
            "affine:1:2",
            "scaled:3:exp",
            "id",
            "log",
            "comp:2:-1:pow:3",
            "sum(exp,scaled:0.5:pow:2)",
            "sum(sum(id,exp),const:1+2i)",
            "scaled:0-1i:id",
        ] {
            let f: FunctionDescriptor = text.parse().unwrap();
            assert_eq!(f.to_string(), text);
        }
        assert_eq!(
            "exponential".parse::<FunctionDescriptor>().unwrap(),
            FunctionDescriptor::Exponential
        );
    }

    #[test]
    fn malformed_expressions() {
        for bad in [
            "",
            "expo",
            "pow",
            "pow:x",
            "exp:1",
            "sum(exp)",
            "sum(exp,id",
            "scaled:2",
            "const:nan",
        ] {
            assert!(bad.parse::<FunctionDescriptor>().is_err(), "{bad}");
        }
    }

    #[test]
    fn jets_of_basic_entries() {
        let f: FunctionDescriptor = "scaled:0.5:pow:2".parse().unwrap();
        assert_eq!(f.eval_real(3.0).unwrap(), 4.5);
        assert_eq!(f.derivative_real(3.0).unwrap(), 3.0);
        assert_eq!(f.second_derivative_real(3.0).unwrap(), 1.0);
        assert_eq!(f.derivative_inverse(2.0).unwrap(), 2.0);

        let g: FunctionDescriptor = "comp:2:1:exp".parse().unwrap();
        let e = (2.0f64 * 0.25 + 1.0).exp();
        assert!((g.derivative_real(0.25).unwrap() - 2.0 * e).abs() < 1e-14);
        assert!((g.second_derivative_real(0.25).unwrap() - 4.0 * e).abs() < 1e-13);
    }

    #[test]
    fn domains() {
        assert_eq!(
            FunctionDescriptor::LogGuarded.eval(c(-1.0)),
            Err(CatalogError::Domain)
        );
        assert_eq!(
            FunctionDescriptor::Power(0.5).eval(c(-1.0)),
            Err(CatalogError::Domain)
        );
        assert_eq!(
            FunctionDescriptor::Power(-1.0).eval(c(0.0)),
            Err(CatalogError::Domain)
        );
        assert!(FunctionDescriptor::Power(3.0).eval(c(-2.0)).is_ok());
        assert_eq!(
            FunctionDescriptor::Identity.derivative_inverse(1.0),
            Err(CatalogError::NotInvertible)
        );
        assert_eq!(
            FunctionDescriptor::Exponential.derivative_inverse(-1.0),
            Err(CatalogError::OutOfRange)
        );
        let h: FunctionDescriptor = "const:1+2i".parse().unwrap();
        assert!(!h.is_real());
        assert_eq!(h.eval_real(0.0), Err(CatalogError::Domain));
    }

    #[test]
    fn constancy_flags() {
        let id = FunctionDescriptor::Identity;
        assert!(id.derivative_is_constant());
        assert!(!id.is_constant());
        assert!(FunctionDescriptor::constant(3.0).is_constant());
        assert!(!FunctionDescriptor::Exponential.derivative_is_constant());
        assert!("sum(id,affine:2:1)"
            .parse::<FunctionDescriptor>()
            .unwrap()
            .derivative_is_constant());
        assert!("comp:0:1:exp"
            .parse::<FunctionDescriptor>()
            .unwrap()
            .is_constant());
    }
}
