use std::fmt;

/// A numerical failure inside a core module, tagged with the module name.
#[derive(Debug)]
pub struct ModuleError {
    pub module: &'static str,
    pub source: pam_core::error::Error,
}

impl fmt::Display for ModuleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.module, self.source)
    }
}

impl std::error::Error for ModuleError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub trait Tag<T> {
    fn tag(self, module: &'static str) -> Result<T, ModuleError>;
}

impl<T> Tag<T> for pam_core::error::Result<T> {
    fn tag(self, module: &'static str) -> Result<T, ModuleError> {
        self.map_err(|source| ModuleError { module, source })
    }
}
