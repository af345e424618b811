//! Per-state evaluation of arithmetic expressions over named random variables.
//!
//! Expressions use the `evalexpr` grammar. Besides its `math::*` builtins,
//! the short names `exp`, `ln`, `sqrt` and `abs` are available.

use std::collections::BTreeMap;

use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes, Function,
    HashMapContext, Value,
};

use risk_sharing::RandomVariable;

use crate::error::{IoError, Result};

type Ctx = HashMapContext<DefaultNumericTypes>;

fn unary(f: fn(f64) -> f64) -> Function<DefaultNumericTypes> {
    Function::new(move |v: &Value<DefaultNumericTypes>| Ok(Value::Float(f(v.as_number()?))))
}

fn base_context() -> Ctx {
    let mut ctx = Ctx::new();
    for (name, f) in [("exp", f64::exp as fn(f64) -> f64), ("ln", f64::ln), ("sqrt", f64::sqrt), ("abs", f64::abs)] {
        ctx.set_function(name.to_string(), unary(f)).expect("hash map context is mutable");
    }
    ctx
}

/// Evaluates `expr` in every state; all variables must have length `states`.
pub fn evaluate(expr: &str, variables: &BTreeMap<String, RandomVariable>, states: usize) -> Result<RandomVariable> {
    let parse_err = |detail: String| IoError::Parse {
        what: format!("expression `{expr}`"),
        detail,
    };
    let tree = build_operator_tree::<DefaultNumericTypes>(expr).map_err(|e| parse_err(e.to_string()))?;
    for name in tree.iter_variable_identifiers() {
        if !variables.contains_key(name) {
            let known: Vec<&str> = variables.keys().map(String::as_str).collect();
            return Err(parse_err(format!("unknown variable `{name}`; known: {known:?}")));
        }
    }
    let mut ctx = base_context();
    let mut out = Vec::with_capacity(states);
    for s in 0..states {
        for (name, v) in variables {
            ctx.set_value(name.clone(), Value::Float(v.values()[s]))
                .map_err(|e| parse_err(e.to_string()))?;
        }
        let x = tree.eval_number_with_context(&ctx).map_err(|e| parse_err(format!("state {s}: {e}")))?;
        if !x.is_finite() {
            return Err(parse_err(format!("not finite in state {s}")));
        }
        out.push(x);
    }
    Ok(RandomVariable::new(out)?)
}
