use crate::args::ReplayArgs;
use crate::failure::CliResult;
use crate::manifest::{self, Invocation};

/// The recorded invocation, optionally redirected to a new output location
/// (a directory, or a file for commands that write one).
pub fn resolve(a: &ReplayArgs) -> CliResult<Invocation> {
    let mut inv = manifest::read(&a.manifest)?.invocation;
    if let Some(out) = &a.out {
        let key = if inv.outputs.contains_key("dir") { "dir" } else { "file" };
        inv.outputs.insert(key.into(), out.clone());
    }
    Ok(inv)
}
