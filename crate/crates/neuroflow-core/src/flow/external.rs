//! Adapter for out-of-process flow programs: frames go out as PGM files, the
//! field comes back as a .flo file.

use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::{FlowBackend, FlowError};
use crate::frame::{FlowField, LumaFrame};
use crate::io::{read_flo, write_pgm, FormatError};

const PLACEHOLDERS: [&str; 3] = ["{prev}", "{curr}", "{out}"];
const STDERR_KEEP: usize = 400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalBackend {
    /// Whitespace-separated argv with `{prev}`, `{curr}`, `{out}` placeholders.
    pub cmd_template: String,
    /// Context the external program is assumed to need around a region, px.
    #[serde(default = "default_pad_radius")]
    pub pad_radius: usize,
}

fn default_pad_radius() -> usize {
    16
}

impl ExternalBackend {
    pub fn new(cmd_template: String) -> Self {
        ExternalBackend { cmd_template, pad_radius: default_pad_radius() }
    }
}

impl FlowBackend for ExternalBackend {
    fn compute(&self, prev: &LumaFrame, curr: &LumaFrame) -> Result<FlowField, FlowError> {
        external_flow(prev, curr, &self.cmd_template)
    }

    fn pad_radius(&self) -> usize {
        self.pad_radius
    }
}

/// Runs one external estimation: writes both frames into a scratch
/// directory, substitutes the three placeholder paths into the template
/// (token-wise, no shell), executes it, and reads back the .flo it wrote.
pub fn external_flow(
    prev: &LumaFrame,
    curr: &LumaFrame,
    cmd_template: &str,
) -> Result<FlowField, FlowError> {
    if prev.width() != curr.width() || prev.height() != curr.height() {
        return Err(FlowError::DimensionMismatch {
            prev_w: prev.width(),
            prev_h: prev.height(),
            curr_w: curr.width(),
            curr_h: curr.height(),
        });
    }
    for ph in PLACEHOLDERS {
        if !cmd_template.contains(ph) {
            return Err(FlowError::BadTemplate {
                template: cmd_template.to_string(),
                missing: ph,
            });
        }
    }

    let dir = tempfile::tempdir().map_err(|source| {
        FlowError::Workspace(FormatError::Io { path: std::env::temp_dir(), source })
    })?;
    let prev_path = dir.path().join("prev.pgm");
    let curr_path = dir.path().join("curr.pgm");
    let out_path = dir.path().join("out.flo");
    write_pgm(prev, &prev_path).map_err(FlowError::Workspace)?;
    write_pgm(curr, &curr_path).map_err(FlowError::Workspace)?;

    let path_str = |p: &Path| p.to_string_lossy().into_owned();
    let tokens: Vec<String> = cmd_template
        .split_whitespace()
        .map(|t| {
            t.replace("{prev}", &path_str(&prev_path))
                .replace("{curr}", &path_str(&curr_path))
                .replace("{out}", &path_str(&out_path))
        })
        .collect();

    let output = Command::new(&tokens[0])
        .args(&tokens[1..])
        .output()
        .map_err(|source| FlowError::BackendSpawn { program: tokens[0].clone(), source })?;
    if !output.status.success() {
        return Err(FlowError::BackendExit {
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).chars().take(STDERR_KEEP).collect(),
        });
    }

    let field = read_flo(&out_path).map_err(FlowError::BackendOutput)?;
    if field.width() != prev.width() || field.height() != prev.height() {
        return Err(FlowError::OutputDimensionMismatch {
            want_w: prev.width(),
            want_h: prev.height(),
            got_w: field.width(),
            got_h: field.height(),
        });
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_flo;
    use std::fs;

    fn sample_frame(w: usize, h: usize) -> LumaFrame {
        let mut frame = LumaFrame::new(w, h);
        for y in 0..h {
            for x in 0..w {
                frame.set(x, y, (40 * x + 10 * y) as u8);
            }
        }
        frame
    }

    fn sample_field(w: usize, h: usize) -> FlowField {
        let mut field = FlowField::new(w, h);
        for y in 0..h {
            for x in 0..w {
                field.set(x, y, x as f32 + 0.25 * y as f32, -(y as f32));
            }
        }
        field
    }

    /// Shell stub that checks both frame files exist and are nonempty, then
    /// copies the fixture field to the output path.
    fn copy_stub(dir: &Path, fixture: &Path) -> String {
        let script = dir.join("run.sh");
        fs::write(
            &script,
            format!(
                "test -s \"$1\" || exit 9\ntest -s \"$2\" || exit 9\ncp {} \"$3\"\n",
                fixture.display()
            ),
        )
        .unwrap();
        format!("/bin/sh {} {{prev}} {{curr}} {{out}}", script.display())
    }

    #[test]
    fn stub_fixture_is_returned_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let fixture = dir.path().join("fixture.flo");
        let field = sample_field(5, 4);
        write_flo(&field, &fixture).unwrap();

        let template = copy_stub(dir.path(), &fixture);
        let frame = sample_frame(5, 4);
        let got = external_flow(&frame, &frame, &template).unwrap();
        assert_eq!(got, field);
    }

    #[test]
    fn nonzero_exit_reports_status_and_stderr() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("fail.sh");
        fs::write(&script, "echo boom >&2\nexit 3\n").unwrap();
        let template = format!("/bin/sh {} {{prev}} {{curr}} {{out}}", script.display());

        let frame = sample_frame(4, 4);
        match external_flow(&frame, &frame, &template) {
            Err(FlowError::BackendExit { status, stderr }) => {
                assert!(status.contains('3'), "status: {status}");
                assert!(stderr.contains("boom"), "stderr: {stderr}");
            }
            other => panic!("expected backend exit error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_output_dimensions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let fixture = dir.path().join("fixture.flo");
        write_flo(&sample_field(2, 2), &fixture).unwrap();

        let template = copy_stub(dir.path(), &fixture);
        let frame = sample_frame(5, 4);
        match external_flow(&frame, &frame, &template) {
            Err(FlowError::OutputDimensionMismatch { want_w: 5, want_h: 4, got_w: 2, got_h: 2 }) => {}
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_output_file_is_a_backend_output_error() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("noop.sh");
        fs::write(&script, "exit 0\n").unwrap();
        let template = format!("/bin/sh {} {{prev}} {{curr}} {{out}}", script.display());

        let frame = sample_frame(4, 4);
        assert!(matches!(
            external_flow(&frame, &frame, &template),
            Err(FlowError::BackendOutput(_))
        ));
    }

    #[test]
    fn template_must_mention_every_placeholder() {
        let frame = sample_frame(4, 4);
        match external_flow(&frame, &frame, "flowprog {prev} {curr}") {
            Err(FlowError::BadTemplate { missing: "{out}", .. }) => {}
            other => panic!("expected bad-template error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_program_is_a_spawn_error() {
        let frame = sample_frame(4, 4);
        let template = "/nonexistent/flowprog {prev} {curr} {out}";
        assert!(matches!(
            external_flow(&frame, &frame, template),
            Err(FlowError::BackendSpawn { .. })
        ));
    }
}
