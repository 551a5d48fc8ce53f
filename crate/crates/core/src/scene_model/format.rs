//! Plain-text sequence files.
//!
//! ```text
//! advtex-sequence 1
//! frames 0 20
//! fov 60
//! resolution 56 56
//! convention left +z +y m
//! adversarial crate
//! track camera main_cam
//! key 0   0 -6 1   0 0 0
//! track mesh_object crate meshes/crate.obj
//! key 0   -1 0 1   0 0 0
//! key 20   1 0 1   0 0 90
//! ```
//!
//! One directive per line, whitespace separated, `#` starts a comment line.
//! `key <frame> <x> <y> <z> <roll> <pitch> <yaw>` appends a keyframe to the
//! most recent `track`.

use std::fmt::Write as _;

use super::{
    ActorKind, ActorTrack, Euler, FrameConvention, Handedness, Keyframe, Pose, SceneSequence,
    SequenceError, SignedAxis,
};

const HEADER: &str = "advtex-sequence";
const VERSION: &str = "1";

struct Token<'a> {
    text: &'a str,
    column: usize,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
}

impl<'a> Line<'a> {
    fn error_at(&self, idx: usize, message: impl Into<String>) -> SequenceError {
        let column = self
            .tokens
            .get(idx)
            .map(|t| t.column)
            .unwrap_or_else(|| self.tokens.last().map_or(1, |t| t.column + t.text.len()));
        SequenceError::Syntax {
            line: self.number,
            column,
            message: message.into(),
        }
    }

    fn expect_arity(&self, n: usize, usage: &str) -> Result<(), SequenceError> {
        if self.tokens.len() != n {
            let idx = self.tokens.len().min(n);
            return Err(self.error_at(idx, format!("expected `{usage}`")));
        }
        Ok(())
    }

    fn number<T: std::str::FromStr>(&self, idx: usize, what: &str) -> Result<T, SequenceError> {
        self.tokens[idx]
            .text
            .parse()
            .map_err(|_| self.error_at(idx, format!("invalid {what} `{}`", self.tokens[idx].text)))
    }
}

fn tokenize(number: usize, raw: &str) -> Line<'_> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in raw.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token {
                    text: &raw[s..i],
                    column: raw[..s].chars().count() + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &raw[s..],
            column: raw[..s].chars().count() + 1,
        });
    }
    Line { number, tokens }
}

fn set_once<T>(slot: &mut Option<T>, value: T, line: &Line<'_>) -> Result<(), SequenceError> {
    if slot.is_some() {
        return Err(line.error_at(0, format!("duplicate `{}` directive", line.tokens[0].text)));
    }
    *slot = Some(value);
    Ok(())
}

/// Parses and validates a sequence file.
pub fn parse_sequence(text: &str) -> Result<SceneSequence, SequenceError> {
    let mut seen_header = false;
    let mut frames = None;
    let mut fov = None;
    let mut resolution = None;
    let mut convention = None;
    let mut adversarial = None;
    let mut tracks: Vec<(String, ActorKind, Option<String>, Vec<Keyframe>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = tokenize(idx + 1, raw);
        let Some(first) = line.tokens.first() else {
            continue;
        };
        if first.text.starts_with('#') {
            continue;
        }
        if !seen_header {
            if first.text != HEADER {
                return Err(line.error_at(0, format!("file must start with `{HEADER} {VERSION}`")));
            }
            line.expect_arity(2, "advtex-sequence <version>")?;
            if line.tokens[1].text != VERSION {
                return Err(line.error_at(1, "unsupported sequence format version"));
            }
            seen_header = true;
            continue;
        }
        match first.text {
            "frames" => {
                line.expect_arity(3, "frames <start> <end>")?;
                let range: (u32, u32) = (line.number(1, "frame")?, line.number(2, "frame")?);
                set_once(&mut frames, range, &line)?;
            }
            "fov" => {
                line.expect_arity(2, "fov <degrees>")?;
                let v: f64 = line.number(1, "fov")?;
                set_once(&mut fov, v, &line)?;
            }
            "resolution" => {
                line.expect_arity(3, "resolution <width> <height>")?;
                let r: (u32, u32) = (line.number(1, "width")?, line.number(2, "height")?);
                set_once(&mut resolution, r, &line)?;
            }
            "convention" => {
                line.expect_arity(5, "convention <left|right> <up> <forward> <unit>")?;
                let handedness = match line.tokens[1].text {
                    "left" => Handedness::Left,
                    "right" => Handedness::Right,
                    _ => return Err(line.error_at(1, "handedness must be `left` or `right`")),
                };
                let up = SignedAxis::parse(line.tokens[2].text)
                    .ok_or_else(|| line.error_at(2, "invalid up axis"))?;
                let camera_forward = SignedAxis::parse(line.tokens[3].text)
                    .ok_or_else(|| line.error_at(3, "invalid forward axis"))?;
                let c = FrameConvention {
                    handedness,
                    up,
                    camera_forward,
                    unit: line.tokens[4].text.to_string(),
                };
                set_once(&mut convention, c, &line)?;
            }
            "adversarial" => {
                line.expect_arity(2, "adversarial <track name>")?;
                set_once(&mut adversarial, line.tokens[1].text.to_string(), &line)?;
            }
            "track" => {
                if !(3..=4).contains(&line.tokens.len()) {
                    return Err(line.error_at(
                        line.tokens.len().min(3),
                        "expected `track <kind> <name> [mesh path]`",
                    ));
                }
                let kind = match line.tokens[1].text {
                    "camera" => ActorKind::Camera,
                    "mesh_object" => ActorKind::MeshObject,
                    "light" => ActorKind::Light,
                    other => return Err(line.error_at(1, format!("unknown actor kind `{other}`"))),
                };
                let asset = line.tokens.get(3).map(|t| t.text.to_string());
                tracks.push((line.tokens[2].text.to_string(), kind, asset, Vec::new()));
            }
            "key" => {
                line.expect_arity(8, "key <frame> <x> <y> <z> <roll> <pitch> <yaw>")?;
                let frame: u32 = line.number(1, "frame")?;
                let mut v = [0.0f64; 6];
                for (i, slot) in v.iter_mut().enumerate() {
                    *slot = line.number(i + 2, "number")?;
                    if !slot.is_finite() {
                        return Err(line.error_at(i + 2, "pose components must be finite"));
                    }
                }
                let pose = Pose::new([v[0], v[1], v[2]], Euler::new(v[3], v[4], v[5]))?;
                let Some(track) = tracks.last_mut() else {
                    return Err(line.error_at(0, "`key` before any `track`"));
                };
                track.3.push(Keyframe { frame, pose });
            }
            other => return Err(line.error_at(0, format!("unknown directive `{other}`"))),
        }
    }

    let end = text.lines().count() + 1;
    let missing = |what: &str| SequenceError::Syntax {
        line: end,
        column: 1,
        message: format!("missing `{what}` directive"),
    };
    if !seen_header {
        return Err(missing(HEADER));
    }
    let (frame_start, frame_end) = frames.ok_or_else(|| missing("frames"))?;
    let tracks = tracks
        .into_iter()
        .map(|(name, kind, asset, keys)| ActorTrack::new(name, kind, keys, asset))
        .collect::<Result<Vec<_>, _>>()?;
    let seq = SceneSequence {
        frame_start,
        frame_end,
        tracks,
        adversarial: adversarial.ok_or_else(|| missing("adversarial"))?,
        camera_fov_deg: fov.ok_or_else(|| missing("fov"))?,
        resolution: resolution.ok_or_else(|| missing("resolution"))?,
        source_convention: convention.unwrap_or_default(),
    };
    seq.validate()?;
    Ok(seq)
}

/// Writes a sequence in the format accepted by [`parse_sequence`].
pub fn serialize_sequence(seq: &SceneSequence) -> String {
    let mut out = String::new();
    let c = &seq.source_convention;
    let handedness = match c.handedness {
        Handedness::Left => "left",
        Handedness::Right => "right",
    };
    let _ = writeln!(out, "{HEADER} {VERSION}");
    let _ = writeln!(out, "frames {} {}", seq.frame_start, seq.frame_end);
    let _ = writeln!(out, "fov {}", seq.camera_fov_deg);
    let _ = writeln!(out, "resolution {} {}", seq.resolution.0, seq.resolution.1);
    let _ = writeln!(out, "convention {handedness} {} {} {}", c.up, c.camera_forward, c.unit);
    let _ = writeln!(out, "adversarial {}", seq.adversarial);
    for track in &seq.tracks {
        match &track.asset_ref {
            Some(asset) => {
                let _ = writeln!(out, "track {} {} {asset}", track.kind, track.name);
            }
            None => {
                let _ = writeln!(out, "track {} {}", track.kind, track.name);
            }
        }
        for k in &track.keyframes {
            let p = k.pose.position;
            let r = k.pose.rotation;
            let _ = writeln!(
                out,
                "key {} {} {} {} {} {} {}",
                k.frame, p[0], p[1], p[2], r.roll, r.pitch, r.yaw
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "\
advtex-sequence 1
frames 0 0
fov 60
resolution 8 8
adversarial box
track camera cam
key 0 0 -5 0 0 0 0
track mesh_object box box.obj
key 0 0 0 0 0 0 0
";

    #[test]
    fn minimal_file() {
        let seq = parse_sequence(MINIMAL).unwrap();
        assert_eq!(seq.tracks.len(), 2);
        assert_eq!(seq.frame_count(), 1);
        assert_eq!(seq.source_convention, FrameConvention::default());
        assert_eq!(seq.adversarial_object().asset_ref.as_deref(), Some("box.obj"));
    }

    #[test]
    fn two_cameras_is_duplicate_camera() {
        let text = format!("{MINIMAL}track camera cam2\nkey 0 0 0 0 0 0 0\n");
        assert_eq!(
            parse_sequence(&text).unwrap_err(),
            SequenceError::DuplicateCamera("cam2".into())
        );
    }

    #[test]
    fn twenty_one_frames_interpolable() {
        let text = "\
advtex-sequence 1
frames 0 20
fov 60
resolution 8 8
adversarial box
track camera cam
key 0 0 -5 0 0 0 0
key 20 2 -5 0 0 0 0
track mesh_object box box.obj
key 0 0 0 0 0 0 0
key 20 0 0 1 0 0 45
";
        let seq = parse_sequence(text).unwrap();
        let frames: Vec<u32> = seq.frames().collect();
        assert_eq!(frames.len(), 21);
        for f in frames {
            seq.camera().interpolate(f).unwrap();
            seq.adversarial_object().interpolate(f).unwrap();
        }
    }

    #[test]
    fn syntax_errors_report_position() {
        let text = MINIMAL.replace("fov 60", "fov sixty");
        match parse_sequence(&text).unwrap_err() {
            SequenceError::Syntax { line, column, .. } => assert_eq!((line, column), (3, 5)),
            e => panic!("unexpected {e:?}"),
        }
        let text = MINIMAL.replace("fov 60", "  colour 3");
        match parse_sequence(&text).unwrap_err() {
            SequenceError::Syntax { line, column, message } => {
                assert_eq!((line, column), (3, 3));
                assert!(message.contains("colour"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn invariant_errors_name_the_actor() {
        let text = MINIMAL.replace("track mesh_object box box.obj", "track mesh_object box");
        match parse_sequence(&text).unwrap_err() {
            SequenceError::Invariant { actor, .. } => assert_eq!(actor, "box"),
            e => panic!("unexpected {e:?}"),
        }
        let text = MINIMAL.replace("fov 60", "fov 180");
        assert!(matches!(parse_sequence(&text), Err(SequenceError::Invariant { .. })));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = format!("# header comment\n\n{}", MINIMAL.replace("fov 60", "fov 60\n   # inline\n"));
        assert_eq!(parse_sequence(&text).unwrap(), parse_sequence(MINIMAL).unwrap());
    }

    #[test]
    fn angles_normalized_at_parse_time() {
        let text = MINIMAL.replace("key 0 0 0 0 0 0 0", "key 0 0 0 0 190 0 -540");
        let seq = parse_sequence(&text).unwrap();
        let r = seq.adversarial_object().keyframes[0].pose.rotation;
        assert_eq!((r.roll, r.yaw), (-170.0, -180.0));
    }

    fn arb_keys() -> impl Strategy<Value = Vec<(u32, [f64; 6])>> {
        prop::collection::btree_map(0u32..50, prop::array::uniform6(-500.0f64..500.0), 1..5)
            .prop_map(|m| m.into_iter().collect())
    }

    proptest! {
        #[test]
        fn serialize_parse_roundtrip(cam in arb_keys(), obj in arb_keys(), fov in 1.0f64..179.0) {
            let mut text = format!(
                "advtex-sequence 1\nframes 0 49\nfov {fov}\nresolution 32 24\nconvention left +z -x m\nadversarial o\ntrack camera c\n"
            );
            for (f, v) in &cam {
                text += &format!("key {f} {} {} {} {} {} {}\n", v[0], v[1], v[2], v[3], v[4], v[5]);
            }
            text += "track mesh_object o mesh.obj\n";
            for (f, v) in &obj {
                text += &format!("key {f} {} {} {} {} {} {}\n", v[0], v[1], v[2], v[3], v[4], v[5]);
            }
            let seq = parse_sequence(&text).unwrap();
            let again = parse_sequence(&serialize_sequence(&seq)).unwrap();
            prop_assert_eq!(&seq, &again);
            prop_assert_eq!(serialize_sequence(&seq), serialize_sequence(&again));
        }
    }
}
