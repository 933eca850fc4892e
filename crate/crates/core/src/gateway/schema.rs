//! Structural validation of model responses.
//!
//! Every prompt declares an explicit return shape; validation checks required
//! keys, value kinds, and enum membership. Extra keys are tolerated.

use serde_json::Value;

/// Expected kind of a response field.
#[derive(Debug, Clone, Copy)]
pub enum FieldKind {
    Bool,
    /// Integer, optionally range-checked (inclusive).
    Integer {
        min: Option<i64>,
        max: Option<i64>,
    },
    /// Any numeric value.
    Number,
    Text,
    /// Array of strings.
    TextList,
    /// Array of integers.
    IntegerList,
    /// String restricted to one of the listed values.
    Enum(&'static [&'static str]),
    /// Array of objects, each validated against the nested specs.
    ObjectList(&'static [FieldSpec]),
    /// String or null.
    NullableText,
    /// Integer or null, optionally range-checked.
    NullableInteger {
        min: Option<i64>,
        max: Option<i64>,
    },
}

/// One field of a response schema.
#[derive(Debug, Clone, Copy)]
pub struct FieldSpec {
    pub name: &'static str,
    pub kind: FieldKind,
    pub required: bool,
}

impl FieldSpec {
    pub const fn required(name: &'static str, kind: FieldKind) -> Self {
        Self {
            name,
            kind,
            required: true,
        }
    }

    pub const fn optional(name: &'static str, kind: FieldKind) -> Self {
        Self {
            name,
            kind,
            required: false,
        }
    }
}

/// Declared return shape of a prompt.
#[derive(Debug, Clone, Copy)]
pub struct Schema {
    pub fields: &'static [FieldSpec],
}

impl Schema {
    /// Check `value` against the schema; `Err` carries the first mismatch.
    pub fn validate(&self, value: &Value) -> Result<(), String> {
        let obj = value
            .as_object()
            .ok_or_else(|| "response is not a JSON object".to_string())?;
        for spec in self.fields {
            let nullable = matches!(
                spec.kind,
                FieldKind::NullableText | FieldKind::NullableInteger { .. }
            );
            match obj.get(spec.name) {
                None | Some(Value::Null) => {
                    if spec.required && !nullable {
                        return Err(format!("missing required field `{}`", spec.name));
                    }
                }
                Some(v) => validate_kind(spec.name, &spec.kind, v)?,
            }
        }
        Ok(())
    }
}

fn validate_kind(name: &str, kind: &FieldKind, value: &Value) -> Result<(), String> {
    match kind {
        FieldKind::Bool => {
            value
                .as_bool()
                .map(|_| ())
                .ok_or_else(|| format!("field `{name}` must be a boolean"))
        }
        FieldKind::Integer { min, max } => {
            let n = value
                .as_i64()
                .ok_or_else(|| format!("field `{name}` must be an integer"))?;
            check_range(name, n, *min, *max)
        }
        FieldKind::Number => {
            value
                .as_f64()
                .map(|_| ())
                .ok_or_else(|| format!("field `{name}` must be a number"))
        }
        FieldKind::Text => {
            value
                .as_str()
                .map(|_| ())
                .ok_or_else(|| format!("field `{name}` must be a string"))
        }
        FieldKind::TextList => {
            let arr = value
                .as_array()
                .ok_or_else(|| format!("field `{name}` must be an array"))?;
            for item in arr {
                if !item.is_string() {
                    return Err(format!("field `{name}` must contain only strings"));
                }
            }
            Ok(())
        }
        FieldKind::IntegerList => {
            let arr = value
                .as_array()
                .ok_or_else(|| format!("field `{name}` must be an array"))?;
            for item in arr {
                if item.as_i64().is_none() {
                    return Err(format!("field `{name}` must contain only integers"));
                }
            }
            Ok(())
        }
        FieldKind::Enum(allowed) => {
            let s = value
                .as_str()
                .ok_or_else(|| format!("field `{name}` must be a string"))?;
            if allowed.contains(&s) {
                Ok(())
            } else {
                Err(format!(
                    "field `{name}` must be one of {allowed:?}, got `{s}`"
                ))
            }
        }
        FieldKind::ObjectList(specs) => {
            let arr = value
                .as_array()
                .ok_or_else(|| format!("field `{name}` must be an array"))?;
            let nested = Schema { fields: specs };
            for (i, item) in arr.iter().enumerate() {
                nested
                    .validate(item)
                    .map_err(|e| format!("field `{name}`[{i}]: {e}"))?;
            }
            Ok(())
        }
        FieldKind::NullableText => {
            if value.is_null() || value.is_string() {
                Ok(())
            } else {
                Err(format!("field `{name}` must be a string or null"))
            }
        }
        FieldKind::NullableInteger { min, max } => {
            if value.is_null() {
                return Ok(());
            }
            let n = value
                .as_i64()
                .ok_or_else(|| format!("field `{name}` must be an integer or null"))?;
            check_range(name, n, *min, *max)
        }
    }
}

fn check_range(name: &str, n: i64, min: Option<i64>, max: Option<i64>) -> Result<(), String> {
    if let Some(min) = min {
        if n < min {
            return Err(format!("field `{name}` must be >= {min}, got {n}"));
        }
    }
    if let Some(max) = max {
        if n > max {
            return Err(format!("field `{name}` must be <= {max}, got {n}"));
        }
    }
    Ok(())
}
