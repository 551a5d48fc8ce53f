//! XML form of a [`FrameScene`].
//!
//! ```xml
//! <scene version="1" frame="3">
//!   <sensor type="perspective">
//!     <float name="fov" value="60"/>
//!     <film width="56" height="56"/>
//!     <transform name="to_world"><matrix value="16 row-major values"/></transform>
//!   </sensor>
//!   <shape type="obj">
//!     <string name="filename" value="meshes/crate.obj"/>
//!     <float name="scale" value="100"/>
//!     <transform name="to_world"><matrix value="..."/></transform>
//!     <texture name="albedo" type="bitmap">
//!       <string name="filename" value="textures/init.pfm"/>
//!       <float name="uv_tiling" value="1"/>
//!       <string name="wrap_mode" value="repeat"/>
//!     </texture>
//!   </shape>
//!   <emitter type="directional">
//!     <vector name="direction" value="x y z"/>
//!     <rgb name="irradiance" value="r g b"/>
//!     <rgb name="ambient" value="r g b"/>
//!   </emitter>
//!   <background value="r g b"/>
//! </scene>
//! ```

use std::fmt::Write as _;

use roxmltree::{Document, Node};

use super::{CameraDesc, FrameScene, ObjectDesc, SceneIoError};
use crate::assets::WrapMode;
use crate::scene_model::LightSpec;
use crate::transform::WorldMatrix;

pub const XML_VERSION: &str = "1";

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn matrix_text(m: &WorldMatrix) -> String {
    m.rows()
        .iter()
        .flatten()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn triple(v: &[f64; 3]) -> String {
    format!("{} {} {}", v[0], v[1], v[2])
}

pub fn emit_xml(scene: &FrameScene) -> String {
    let mut out = String::new();
    let cam = &scene.camera;
    let obj = &scene.object;
    let light = &scene.light;
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"utf-8\"?>");
    let _ = writeln!(out, "<scene version=\"{XML_VERSION}\" frame=\"{}\">", scene.frame);
    let _ = writeln!(out, "  <sensor type=\"perspective\">");
    let _ = writeln!(out, "    <float name=\"fov\" value=\"{}\"/>", cam.fov_deg);
    let _ = writeln!(out, "    <film width=\"{}\" height=\"{}\"/>", cam.width, cam.height);
    let _ = writeln!(out, "    <transform name=\"to_world\">");
    let _ = writeln!(out, "      <matrix value=\"{}\"/>", matrix_text(&cam.to_world));
    let _ = writeln!(out, "    </transform>");
    let _ = writeln!(out, "  </sensor>");
    let _ = writeln!(out, "  <shape type=\"obj\">");
    let _ = writeln!(out, "    <string name=\"filename\" value=\"{}\"/>", escape(&obj.mesh_path));
    let _ = writeln!(out, "    <float name=\"scale\" value=\"{}\"/>", obj.scale);
    let _ = writeln!(out, "    <transform name=\"to_world\">");
    let _ = writeln!(out, "      <matrix value=\"{}\"/>", matrix_text(&obj.to_world));
    let _ = writeln!(out, "    </transform>");
    let _ = writeln!(out, "    <texture name=\"albedo\" type=\"bitmap\">");
    let _ = writeln!(out, "      <string name=\"filename\" value=\"{}\"/>", escape(&obj.texture_path));
    let _ = writeln!(out, "      <float name=\"uv_tiling\" value=\"{}\"/>", obj.uv_tiling);
    let _ = writeln!(out, "      <string name=\"wrap_mode\" value=\"{}\"/>", obj.wrap.as_str());
    let _ = writeln!(out, "    </texture>");
    let _ = writeln!(out, "  </shape>");
    let _ = writeln!(out, "  <emitter type=\"directional\">");
    let _ = writeln!(out, "    <vector name=\"direction\" value=\"{}\"/>", triple(&light.direction));
    let _ = writeln!(out, "    <rgb name=\"irradiance\" value=\"{}\"/>", triple(&light.intensity));
    let _ = writeln!(out, "    <rgb name=\"ambient\" value=\"{}\"/>", triple(&light.ambient));
    let _ = writeln!(out, "  </emitter>");
    let _ = writeln!(out, "  <background value=\"{}\"/>", triple(&scene.background));
    let _ = writeln!(out, "</scene>");
    out
}

fn schema(msg: impl Into<String>) -> SceneIoError {
    SceneIoError::Schema(msg.into())
}

fn child<'a, 'i>(parent: Node<'a, 'i>, tag: &str) -> Result<Node<'a, 'i>, SceneIoError> {
    let mut found = parent.children().filter(|n| n.has_tag_name(tag));
    let node = found
        .next()
        .ok_or_else(|| schema(format!("<{}> is missing <{tag}>", parent.tag_name().name())))?;
    if found.next().is_some() {
        return Err(schema(format!("<{}> has more than one <{tag}>", parent.tag_name().name())));
    }
    Ok(node)
}

fn named<'a, 'i>(parent: Node<'a, 'i>, tag: &str, name: &str) -> Result<Node<'a, 'i>, SceneIoError> {
    let mut found = parent
        .children()
        .filter(|n| n.has_tag_name(tag) && n.attribute("name") == Some(name));
    let node = found.next().ok_or_else(|| {
        schema(format!("<{}> is missing <{tag} name=\"{name}\">", parent.tag_name().name()))
    })?;
    if found.next().is_some() {
        return Err(schema(format!("duplicate <{tag} name=\"{name}\">")));
    }
    Ok(node)
}

fn attr<'a>(node: Node<'a, '_>, key: &str) -> Result<&'a str, SceneIoError> {
    node.attribute(key)
        .ok_or_else(|| schema(format!("<{}> is missing attribute `{key}`", node.tag_name().name())))
}

fn parse_num<T: std::str::FromStr>(text: &str, what: &str) -> Result<T, SceneIoError> {
    text.trim()
        .parse()
        .map_err(|_| schema(format!("invalid {what} `{text}`")))
}

fn floats<const N: usize>(text: &str, what: &str) -> Result<[f64; N], SceneIoError> {
    let values: Vec<&str> = text.split_whitespace().collect();
    if values.len() != N {
        return Err(schema(format!("{what} needs {N} values, got {}", values.len())));
    }
    let mut out = [0.0f64; N];
    for (slot, v) in out.iter_mut().zip(values) {
        *slot = parse_num(v, what)?;
    }
    Ok(out)
}

fn matrix(parent: Node<'_, '_>) -> Result<WorldMatrix, SceneIoError> {
    let transform = named(parent, "transform", "to_world")?;
    let values: [f64; 16] = floats(attr(child(transform, "matrix")?, "value")?, "matrix")?;
    let mut rows = [[0.0; 4]; 4];
    for (i, row) in rows.iter_mut().enumerate() {
        row.copy_from_slice(&values[4 * i..4 * i + 4]);
    }
    Ok(WorldMatrix::from_rows(&rows)?)
}

pub fn parse_xml(text: &str) -> Result<FrameScene, SceneIoError> {
    let doc = Document::parse(text).map_err(|e| schema(format!("malformed xml: {e}")))?;
    let root = doc.root_element();
    if !root.has_tag_name("scene") {
        return Err(schema("root element must be <scene>"));
    }
    if attr(root, "version")? != XML_VERSION {
        return Err(schema(format!("unsupported scene version `{}`", attr(root, "version")?)));
    }
    let frame = parse_num(attr(root, "frame")?, "frame")?;

    let sensor = child(root, "sensor")?;
    let film = child(sensor, "film")?;
    let camera = CameraDesc {
        to_world: matrix(sensor)?,
        fov_deg: parse_num(attr(named(sensor, "float", "fov")?, "value")?, "fov")?,
        width: parse_num(attr(film, "width")?, "width")?,
        height: parse_num(attr(film, "height")?, "height")?,
    };

    let shape = child(root, "shape")?;
    let texture = named(shape, "texture", "albedo")?;
    let wrap_text = attr(named(texture, "string", "wrap_mode")?, "value")?;
    let object = ObjectDesc {
        mesh_path: attr(named(shape, "string", "filename")?, "value")?.to_string(),
        to_world: matrix(shape)?,
        scale: parse_num(attr(named(shape, "float", "scale")?, "value")?, "scale")?,
        texture_path: attr(named(texture, "string", "filename")?, "value")?.to_string(),
        uv_tiling: parse_num(attr(named(texture, "float", "uv_tiling")?, "value")?, "uv_tiling")?,
        wrap: WrapMode::parse(wrap_text).ok_or_else(|| schema(format!("unknown wrap_mode `{wrap_text}`")))?,
    };

    let emitter = child(root, "emitter")?;
    let light = LightSpec {
        direction: floats(attr(named(emitter, "vector", "direction")?, "value")?, "direction")?,
        intensity: floats(attr(named(emitter, "rgb", "irradiance")?, "value")?, "irradiance")?,
        ambient: floats(attr(named(emitter, "rgb", "ambient")?, "value")?, "ambient")?,
    };
    let background = floats(attr(child(root, "background")?, "value")?, "background")?;

    let scene = FrameScene {
        frame,
        camera,
        object,
        light,
        background,
    };
    scene.validate()?;
    Ok(scene)
}
