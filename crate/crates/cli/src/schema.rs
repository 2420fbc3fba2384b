//! Flat field schemas for parameter documents.
//!
//! Checking happens before deserialization so that every missing, mistyped
//! or unknown field is reported in one pass.

use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    /// Finite number.
    Number,
    /// Nonnegative integer.
    Count,
    Bool,
    String,
    Array,
    Object,
}

impl Ty {
    fn name(self) -> &'static str {
        match self {
            Ty::Number => "a finite number",
            Ty::Count => "a nonnegative integer",
            Ty::Bool => "a boolean",
            Ty::String => "a string",
            Ty::Array => "an array",
            Ty::Object => "an object",
        }
    }

    fn accepts(self, v: &Value) -> bool {
        match self {
            Ty::Number => v.as_f64().is_some_and(f64::is_finite),
            Ty::Count => v.as_u64().is_some(),
            Ty::Bool => v.is_boolean(),
            Ty::String => v.is_string(),
            Ty::Array => v.is_array(),
            Ty::Object => v.is_object(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Field {
    pub name: &'static str,
    pub ty: Ty,
    pub required: bool,
}

pub const fn req(name: &'static str, ty: Ty) -> Field {
    Field { name, ty, required: true }
}

pub const fn opt(name: &'static str, ty: Ty) -> Field {
    Field { name, ty, required: false }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Every violation of `fields` in `doc`, in field order followed by unknown keys.
pub fn violations(doc: &Value, fields: &[Field]) -> Vec<String> {
    let Some(map) = doc.as_object() else {
        return vec![format!("parameters: expected an object, got {}", kind(doc))];
    };
    let mut out = Vec::new();
    for f in fields {
        match map.get(f.name) {
            None | Some(Value::Null) if f.required => out.push(format!("{}: missing required field ({})", f.name, f.ty.name())),
            None | Some(Value::Null) => {}
            Some(v) if !f.ty.accepts(v) => out.push(format!("{}: expected {}, got {v}", f.name, f.ty.name())),
            Some(_) => {}
        }
    }
    for key in map.keys() {
        if !fields.iter().any(|f| f.name == key) {
            out.push(format!("{key}: unknown field"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn reports_all_failures() {
        let fields = [req("n", Ty::Count), req("delta", Ty::Number), opt("flag", Ty::Bool)];
        let v = violations(&json!({"n": -1, "flag": 3, "extra": 0}), &fields);
        assert_eq!(v.len(), 4, "{v:?}");
        assert!(v[0].starts_with("n:"));
        assert!(v[1].starts_with("delta: missing"));
        assert!(v[2].starts_with("flag:"));
        assert!(v[3].starts_with("extra: unknown"));
        assert!(violations(&json!({"n": 3, "delta": 0.1}), &fields).is_empty());
        assert_eq!(violations(&json!([1]), &fields).len(), 1);
    }
}
