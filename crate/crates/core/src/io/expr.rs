use std::fmt;

use fasteval::{Compiler, Evaler, Instruction, Parser, Slab};

use crate::mesh::Point;

/// Compiled arithmetic expression in `x`, `y`, `z` and `t`.
///
/// Besides the built-in functions (`sin`, `cos`, `abs`, `min`, `max`,
/// `pi()`, comparisons, `&&`, `||`, ...) it provides `exp`, `sqrt` and `ln`.
/// Comparisons evaluate to `1` or `0`.
pub struct Expression {
    source: String,
    slab: Slab,
    instruction: Instruction,
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({:?})", self.source)
    }
}

impl Clone for Expression {
    fn clone(&self) -> Self {
        Expression::parse(&self.source).expect("source parsed before")
    }
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self, String> {
        let mut slab = Slab::new();
        let instruction = Parser::new()
            .parse(source, &mut slab.ps)
            .map_err(|e| format!("cannot parse `{source}`: {e:?}"))?
            .from(&slab.ps)
            .compile(&slab.ps, &mut slab.cs);
        let expr = Expression { source: source.to_string(), slab, instruction };
        expr.eval(&[0.0; 3], 0.0)?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &Point, t: f64) -> Result<f64, String> {
        let mut ns = |name: &str, args: Vec<f64>| -> Option<f64> {
            match (name, args.as_slice()) {
                ("x", []) => Some(x[0]),
                ("y", []) => Some(x[1]),
                ("z", []) => Some(x[2]),
                ("t", []) => Some(t),
                ("exp", [a]) => Some(a.exp()),
                ("sqrt", [a]) => Some(a.sqrt()),
                ("ln", [a]) => Some(a.ln()),
                _ => None,
            }
        };
        self.instruction
            .eval(&self.slab, &mut ns)
            .map_err(|e| format!("cannot evaluate `{}`: {e:?}", self.source))
    }

    /// Evaluation that maps errors to NaN, for use inside coefficient
    /// closures whose consumers reject non-finite values.
    pub fn eval_or_nan(&self, x: &Point, t: f64) -> f64 {
        self.eval(x, t).unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variables_functions_and_comparisons() {
        let e = Expression::parse("(x > 0.75) * (y < 0.25) + exp(0) + t").unwrap();
        assert_eq!(e.eval(&[0.8, 0.1, 0.0], 2.0).unwrap(), 4.0);
        assert_eq!(e.eval(&[0.5, 0.1, 0.0], 0.0).unwrap(), 1.0);
        let s = Expression::parse("sin(pi() * x) * sqrt(4)").unwrap();
        assert!((s.eval(&[0.5, 0.0, 0.0], 0.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(Expression::parse("foo + 1").is_err());
        assert!(Expression::parse("1 +").is_err());
    }
}
