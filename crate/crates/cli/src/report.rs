use serde_json::{Map, Value};

/// Prints the machine-readable summary line for `command`.
pub fn emit(command: &str, fields: Value) {
    let mut obj = Map::new();
    obj.insert("command".into(), Value::from(command));
    if let Value::Object(m) = fields {
        obj.extend(m);
    }
    println!("#ace {}", Value::Object(obj));
}
