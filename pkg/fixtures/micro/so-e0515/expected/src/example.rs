use std::collections::HashMap;
use std::sync::RwLock;

#[derive(Debug)]
pub struct Bar {
    value: u32,
}

impl Bar {
    pub fn new() -> Bar {
        Bar { value: 0 }
    }
}

struct Foo {
  map: RwLock<HashMap<String, std::sync::Arc<Bar>>
}

impl Foo {
  pub fn get(&self, key: String) -> std::sync::Arc<Bar> {
    self.map.write().unwrap().entry(key).or_insert_with(
      || std::sync::Arc::new(Bar::new())).clone()
  }
}
