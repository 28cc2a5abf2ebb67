//! Robot descriptions: a URDF subset parser, the kinematic tree, and forward
//! kinematics.
//!
//! Supported tags: `robot, link, joint, origin, axis, limit, parent, child,
//! visual, geometry, box, cylinder, sphere, mesh, material, color`. Anything
//! else is skipped with a warning. Orientations use URDF roll/pitch/yaw.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{HomogeneousMatrix, RotationMatrix, Vec3};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KinematicsError {
    #[error("kinematic graph contains a cycle")]
    Cycle,
    #[error("orphan link: {0}")]
    OrphanLink(String),
    #[error("duplicate joint name {0:?}")]
    DuplicateJoint(String),
    #[error("duplicate link name {0:?}")]
    DuplicateLink(String),
    #[error("link {0:?} has more than one parent joint")]
    MultipleParents(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RobotError {
    #[error("xml error: {0}")]
    Xml(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("unsupported joint type {kind:?} on joint {joint:?}")]
    UnsupportedJointType { joint: String, kind: String },
    #[error("invalid robot description: {0}")]
    Invalid(String),
    #[error("no value for joint {0:?}")]
    MissingJointValue(String),
    #[error("joint {0:?} is not a movable joint of this robot")]
    UnknownJoint(String),
    #[error("joint {joint:?} value {value} outside limits [{lower}, {upper}]")]
    ValueOutOfLimits { joint: String, value: f64, lower: f64, upper: f64 },
    #[error("unknown link {0:?}")]
    UnknownLink(String),
}

/// URDF `<origin xyz rpy>`, kept verbatim next to its transform so that
/// re-serialization is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Origin {
    pub xyz: Vec3,
    pub rpy: Vec3,
    transform: HomogeneousMatrix,
}

impl Default for Origin {
    fn default() -> Self {
        Origin::new(Vec3::ZERO, Vec3::ZERO)
    }
}

impl Origin {
    pub fn new(xyz: Vec3, rpy: Vec3) -> Self {
        Origin {
            xyz,
            rpy,
            transform: HomogeneousMatrix::new(RotationMatrix::from_rpy(rpy.x, rpy.y, rpy.z), xyz),
        }
    }

    pub fn transform(&self) -> &HomogeneousMatrix {
        &self.transform
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Box { size: Vec3 },
    /// Axis along local z, centered on the origin.
    Cylinder { radius: f64, length: f64 },
    Sphere { radius: f64 },
    /// Triangle OBJ file, path relative to the description file.
    Mesh { path: String, scale: Vec3 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Visual {
    pub geometry: Geometry,
    pub origin: Origin,
    pub color: [f64; 3],
}

pub const DEFAULT_COLOR: [f64; 3] = [0.7, 0.7, 0.7];

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub visuals: Vec<Visual>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JointKind::Revolute => "revolute",
            JointKind::Prismatic => "prismatic",
            JointKind::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub lower: f64,
    pub upper: f64,
}

impl Limits {
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    pub origin: Origin,
    /// Unit axis; `(1, 0, 0)` for fixed joints.
    pub axis: Vec3,
    /// Present for every non-fixed joint.
    pub limits: Option<Limits>,
}

impl JointSpec {
    pub fn is_movable(&self) -> bool {
        self.kind != JointKind::Fixed
    }

    /// Transform contributed by the joint's motion at `value`.
    pub fn motion(&self, value: f64) -> HomogeneousMatrix {
        match self.kind {
            JointKind::Fixed => HomogeneousMatrix::IDENTITY,
            JointKind::Revolute => HomogeneousMatrix::from_rotation(RotationMatrix::from_axis_angle(self.axis, value)),
            JointKind::Prismatic => HomogeneousMatrix::from_translation(self.axis * value),
        }
    }
}

/// A full or partial assignment of joint values (radians or meters).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub BTreeMap<String, f64>);

impl JointConfig {
    pub fn new() -> Self {
        JointConfig::default()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) -> Option<f64> {
        self.0.insert(name.into(), value)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for JointConfig {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        JointConfig(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

/// An immutable, tree-validated robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<JointSpec>,
    pub root_link: String,
    link_index: HashMap<String, usize>,
    /// Joint indices in parent-before-child order.
    joint_order: Vec<usize>,
    /// Parent link index per joint, child link index per joint.
    joint_links: Vec<(usize, usize)>,
}

/// Non-fatal parser findings (ignored tags, clamped values).
pub type Warnings = Vec<String>;

impl RobotModel {
    /// Validates the tree and builds lookup tables.
    pub fn new(name: String, links: Vec<Link>, joints: Vec<JointSpec>) -> Result<RobotModel, RobotError> {
        let mut link_index = HashMap::with_capacity(links.len());
        for (i, l) in links.iter().enumerate() {
            if link_index.insert(l.name.clone(), i).is_some() {
                return Err(KinematicsError::DuplicateLink(l.name.clone()).into());
            }
        }
        let mut seen_joints = HashMap::new();
        let mut parent_of: Vec<Option<usize>> = vec![None; links.len()];
        let mut joint_links = Vec::with_capacity(joints.len());
        for (j, joint) in joints.iter().enumerate() {
            if seen_joints.insert(joint.name.as_str(), j).is_some() {
                return Err(KinematicsError::DuplicateJoint(joint.name.clone()).into());
            }
            let p = *link_index
                .get(&joint.parent)
                .ok_or_else(|| KinematicsError::OrphanLink(format!("joint {:?} parent {:?} does not exist", joint.name, joint.parent)))?;
            let c = *link_index
                .get(&joint.child)
                .ok_or_else(|| KinematicsError::OrphanLink(format!("joint {:?} child {:?} does not exist", joint.name, joint.child)))?;
            if parent_of[c].replace(j).is_some() {
                return Err(KinematicsError::MultipleParents(joint.child.clone()).into());
            }
            if joint.is_movable() {
                let lim = joint
                    .limits
                    .ok_or_else(|| RobotError::Invalid(format!("joint {:?} has no limits", joint.name)))?;
                if !(lim.lower <= lim.upper) {
                    return Err(RobotError::Invalid(format!("joint {:?} has lower > upper", joint.name)));
                }
                if (joint.axis.norm() - 1.0).abs() > 1e-9 {
                    return Err(RobotError::Invalid(format!("joint {:?} axis is not unit length", joint.name)));
                }
            }
            joint_links.push((p, c));
        }
        let roots: Vec<usize> = (0..links.len()).filter(|&i| parent_of[i].is_none()).collect();
        let root = match roots.as_slice() {
            [] => return Err(KinematicsError::Cycle.into()),
            [r] => *r,
            [_, rest @ ..] => {
                return Err(KinematicsError::OrphanLink(format!(
                    "link {:?} is not connected to the tree",
                    links[rest[0]].name
                ))
                .into())
            }
        };
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
        for (j, &(p, _)) in joint_links.iter().enumerate() {
            children[p].push(j);
        }
        let mut joint_order = Vec::with_capacity(joints.len());
        let mut stack = vec![root];
        let mut visited = 1;
        while let Some(l) = stack.pop() {
            for &j in children[l].iter().rev() {
                joint_order.push(j);
                stack.push(joint_links[j].1);
                visited += 1;
            }
        }
        if visited != links.len() {
            return Err(KinematicsError::Cycle.into());
        }
        Ok(RobotModel {
            name,
            root_link: links[root].name.clone(),
            links,
            joints,
            link_index,
            joint_order,
            joint_links,
        })
    }

    pub fn link(&self, name: &str) -> Option<&Link> {
        self.link_index.get(name).map(|&i| &self.links[i])
    }

    pub fn link_id(&self, name: &str) -> Option<usize> {
        self.link_index.get(name).copied()
    }

    pub fn joint(&self, name: &str) -> Option<&JointSpec> {
        self.joints.iter().find(|j| j.name == name)
    }

    pub fn movable_joints(&self) -> impl Iterator<Item = &JointSpec> {
        self.joints.iter().filter(|j| j.is_movable())
    }

    /// Every movable joint at zero (clamped into its limits).
    pub fn neutral_config(&self) -> JointConfig {
        self.movable_joints()
            .map(|j| (j.name.clone(), j.limits.map_or(0.0, |l| l.clamp(0.0))))
            .collect()
    }

    /// Clamps each value into its joint's limits. Unknown names are kept as-is.
    pub fn clamp_config(&self, config: &JointConfig) -> JointConfig {
        config
            .iter()
            .map(|(name, v)| {
                let v = match self.joint(name).and_then(|j| j.limits) {
                    Some(l) => l.clamp(v),
                    None => v,
                };
                (name.to_string(), v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FkOptions {
    /// Reject out-of-limit values instead of clamping them.
    pub strict_limits: bool,
}

/// World pose of every link, indexed like `model.links`, with the root at identity.
pub fn link_poses(model: &RobotModel, config: &JointConfig, opts: FkOptions) -> Result<Vec<HomogeneousMatrix>, RobotError> {
    if let Some((name, _)) = config.iter().find(|(n, _)| !model.joint(n).is_some_and(|j| j.is_movable())) {
        return Err(RobotError::UnknownJoint(name.to_string()));
    }
    let mut poses = vec![HomogeneousMatrix::IDENTITY; model.links.len()];
    for &j in &model.joint_order {
        let joint = &model.joints[j];
        let (p, c) = model.joint_links[j];
        let motion = if joint.is_movable() {
            let raw = config
                .get(&joint.name)
                .ok_or_else(|| RobotError::MissingJointValue(joint.name.clone()))?;
            if !raw.is_finite() {
                return Err(RobotError::Invalid(format!("joint {:?} value is not finite", joint.name)));
            }
            let lim = joint.limits.expect("validated at construction");
            let value = if lim.contains(raw) {
                raw
            } else if opts.strict_limits {
                return Err(RobotError::ValueOutOfLimits {
                    joint: joint.name.clone(),
                    value: raw,
                    lower: lim.lower,
                    upper: lim.upper,
                });
            } else {
                log::warn!("clamping joint {:?} value {raw} into [{}, {}]", joint.name, lim.lower, lim.upper);
                lim.clamp(raw)
            };
            joint.motion(value)
        } else {
            HomogeneousMatrix::IDENTITY
        };
        poses[c] = poses[p].compose(joint.origin.transform()).compose(&motion);
    }
    Ok(poses)
}

/// Link name -> world pose.
pub fn forward_kinematics(
    model: &RobotModel,
    config: &JointConfig,
    opts: FkOptions,
) -> Result<BTreeMap<String, HomogeneousMatrix>, RobotError> {
    let poses = link_poses(model, config, opts)?;
    Ok(model.links.iter().map(|l| l.name.clone()).zip(poses).collect())
}

/// World positions of the named link origins.
pub fn marker_positions(model: &RobotModel, config: &JointConfig, markers: &[&str]) -> Result<Vec<Vec3>, RobotError> {
    let ids = markers
        .iter()
        .map(|m| model.link_id(m).ok_or_else(|| RobotError::UnknownLink(m.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let poses = link_poses(model, config, FkOptions::default())?;
    Ok(ids.into_iter().map(|i| poses[i].translation).collect())
}

fn parse_floats<const N: usize>(s: &str, what: &str) -> Result<[f64; N], RobotError> {
    let vals: Vec<f64> = s
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| RobotError::Xml(format!("bad number in {what} {s:?}: {e}")))?;
    let arr: [f64; N] = vals
        .try_into()
        .map_err(|_| RobotError::Xml(format!("{what} expects {N} numbers, got {s:?}")))?;
    if arr.iter().any(|v| !v.is_finite()) {
        return Err(RobotError::Xml(format!("{what} has non-finite values")));
    }
    Ok(arr)
}

fn attr_f64(node: roxmltree::Node, name: &str) -> Result<f64, RobotError> {
    let s = node
        .attribute(name)
        .ok_or_else(|| RobotError::Xml(format!("<{}> missing attribute {name:?}", node.tag_name().name())))?;
    Ok(parse_floats::<1>(s, name)?[0])
}

fn required_attr<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Result<&'a str, RobotError> {
    node.attribute(name)
        .ok_or_else(|| RobotError::Xml(format!("<{}> missing attribute {name:?}", node.tag_name().name())))
}

fn parse_origin(node: Option<roxmltree::Node>) -> Result<Origin, RobotError> {
    let Some(n) = node else { return Ok(Origin::default()) };
    let xyz = n.attribute("xyz").map(|s| parse_floats::<3>(s, "xyz")).transpose()?.unwrap_or([0.0; 3]);
    let rpy = n.attribute("rpy").map(|s| parse_floats::<3>(s, "rpy")).transpose()?.unwrap_or([0.0; 3]);
    Ok(Origin::new(Vec3::from_array(xyz), Vec3::from_array(rpy)))
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, tag: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.is_element() && c.tag_name().name() == tag)
}

fn positive(v: f64, what: &str) -> Result<f64, RobotError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(RobotError::Invalid(format!("{what} must be positive, got {v}")))
    }
}

fn parse_color(material: roxmltree::Node, named: &HashMap<String, [f64; 3]>) -> Result<Option<[f64; 3]>, RobotError> {
    if let Some(c) = child(material, "color") {
        let rgba = parse_floats::<4>(required_attr(c, "rgba")?, "rgba")?;
        return Ok(Some([rgba[0], rgba[1], rgba[2]]));
    }
    Ok(material.attribute("name").and_then(|n| named.get(n).copied()))
}

fn parse_geometry(g: roxmltree::Node, warnings: &mut Warnings) -> Result<Option<Geometry>, RobotError> {
    for shape in g.children().filter(|c| c.is_element()) {
        let geom = match shape.tag_name().name() {
            "box" => {
                let s = parse_floats::<3>(required_attr(shape, "size")?, "size")?;
                for v in s {
                    positive(v, "box size")?;
                }
                Geometry::Box { size: Vec3::from_array(s) }
            }
            "cylinder" => Geometry::Cylinder {
                radius: positive(attr_f64(shape, "radius")?, "cylinder radius")?,
                length: positive(attr_f64(shape, "length")?, "cylinder length")?,
            },
            "sphere" => Geometry::Sphere { radius: positive(attr_f64(shape, "radius")?, "sphere radius")? },
            "mesh" => {
                let scale = shape
                    .attribute("scale")
                    .map(|s| parse_floats::<3>(s, "scale"))
                    .transpose()?
                    .unwrap_or([1.0; 3]);
                for v in scale {
                    positive(v, "mesh scale")?;
                }
                Geometry::Mesh {
                    path: required_attr(shape, "filename")?.to_string(),
                    scale: Vec3::from_array(scale),
                }
            }
            other => {
                warnings.push(format!("ignoring unsupported geometry <{other}>"));
                continue;
            }
        };
        return Ok(Some(geom));
    }
    Ok(None)
}

/// Parses a URDF-subset document, returning the model and any warnings.
pub fn parse_robot_description_with_warnings(xml: &str) -> Result<(RobotModel, Warnings), RobotError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| RobotError::Xml(e.to_string()))?;
    let robot = doc.root_element();
    if robot.tag_name().name() != "robot" {
        return Err(RobotError::Xml(format!("root element is <{}>, expected <robot>", robot.tag_name().name())));
    }
    let name = robot.attribute("name").unwrap_or("robot").to_string();
    let mut warnings = Warnings::new();

    let mut named_colors = HashMap::new();
    for m in robot.children().filter(|c| c.is_element() && c.tag_name().name() == "material") {
        if let (Some(n), Some(c)) = (m.attribute("name"), parse_color(m, &HashMap::new())?) {
            named_colors.insert(n.to_string(), c);
        }
    }

    let mut links = Vec::new();
    let mut joints = Vec::new();
    for node in robot.children().filter(|c| c.is_element()) {
        match node.tag_name().name() {
            "link" => {
                let mut visuals = Vec::new();
                for part in node.children().filter(|c| c.is_element()) {
                    match part.tag_name().name() {
                        "visual" => {
                            let Some(g) = child(part, "geometry") else {
                                return Err(RobotError::Xml("<visual> without <geometry>".into()));
                            };
                            let Some(geometry) = parse_geometry(g, &mut warnings)? else { continue };
                            let color = match child(part, "material") {
                                Some(m) => parse_color(m, &named_colors)?.unwrap_or(DEFAULT_COLOR),
                                None => DEFAULT_COLOR,
                            };
                            visuals.push(Visual { geometry, origin: parse_origin(child(part, "origin"))?, color });
                        }
                        other => warnings.push(format!("ignoring <{other}> in link")),
                    }
                }
                links.push(Link { name: required_attr(node, "name")?.to_string(), visuals });
            }
            "joint" => joints.push(parse_joint(node, &mut warnings)?),
            "material" => {}
            other => warnings.push(format!("ignoring top-level <{other}>")),
        }
    }
    for w in &warnings {
        log::warn!("{name}: {w}");
    }
    Ok((RobotModel::new(name, links, joints)?, warnings))
}

fn parse_joint(node: roxmltree::Node, warnings: &mut Warnings) -> Result<JointSpec, RobotError> {
    let name = required_attr(node, "name")?.to_string();
    let kind_str = required_attr(node, "type")?;
    let kind = match kind_str {
        "revolute" => JointKind::Revolute,
        "prismatic" => JointKind::Prismatic,
        "fixed" => JointKind::Fixed,
        other => return Err(RobotError::UnsupportedJointType { joint: name, kind: other.to_string() }),
    };
    let link_ref = |tag: &str| -> Result<String, RobotError> {
        let n = child(node, tag).ok_or_else(|| RobotError::Xml(format!("joint {name:?} has no <{tag}>")))?;
        Ok(required_attr(n, "link")?.to_string())
    };
    let parent = link_ref("parent")?;
    let child_link = link_ref("child")?;
    let origin = parse_origin(child(node, "origin"))?;
    let (axis, limits) = if kind == JointKind::Fixed {
        (Vec3::X, None)
    } else {
        let raw = match child(node, "axis") {
            Some(a) => Vec3::from_array(parse_floats::<3>(required_attr(a, "xyz")?, "axis")?),
            None => Vec3::X,
        };
        let axis = raw
            .normalized()
            .ok_or_else(|| RobotError::Invalid(format!("joint {name:?} has a zero axis")))?;
        let lim = child(node, "limit").ok_or_else(|| RobotError::Invalid(format!("joint {name:?} has no <limit>")))?;
        let lower = lim.attribute("lower").map(|_| attr_f64(lim, "lower")).transpose()?.unwrap_or(0.0);
        let upper = lim.attribute("upper").map(|_| attr_f64(lim, "upper")).transpose()?.unwrap_or(0.0);
        if lower > upper {
            return Err(RobotError::Invalid(format!("joint {name:?} has lower {lower} > upper {upper}")));
        }
        (axis, Some(Limits { lower, upper }))
    };
    for c in node.children().filter(|c| c.is_element()) {
        let tag = c.tag_name().name();
        if !matches!(tag, "parent" | "child" | "origin" | "axis" | "limit") {
            warnings.push(format!("ignoring <{tag}> in joint {name:?}"));
        }
    }
    Ok(JointSpec { name, kind, parent, child: child_link, origin, axis, limits })
}

/// Parses a URDF-subset document; warnings go to the log.
pub fn parse_robot_description(xml: &str) -> Result<RobotModel, RobotError> {
    parse_robot_description_with_warnings(xml).map(|(m, _)| m)
}

fn fmt3(v: Vec3) -> String {
    format!("{:?} {:?} {:?}", v.x, v.y, v.z)
}

fn write_origin(out: &mut String, indent: &str, o: &Origin) {
    let _ = writeln!(out, "{indent}<origin xyz=\"{}\" rpy=\"{}\"/>", fmt3(o.xyz), fmt3(o.rpy));
}

/// Writes the model back out as URDF. Parsing the result yields an equal model.
pub fn to_urdf(model: &RobotModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\"?>");
    let _ = writeln!(out, "<robot name=\"{}\">", xml_escape(&model.name));
    for link in &model.links {
        let _ = writeln!(out, "  <link name=\"{}\">", xml_escape(&link.name));
        for v in &link.visuals {
            let _ = writeln!(out, "    <visual>");
            write_origin(&mut out, "      ", &v.origin);
            let _ = writeln!(out, "      <geometry>");
            match &v.geometry {
                Geometry::Box { size } => {
                    let _ = writeln!(out, "        <box size=\"{}\"/>", fmt3(*size));
                }
                Geometry::Cylinder { radius, length } => {
                    let _ = writeln!(out, "        <cylinder radius=\"{radius:?}\" length=\"{length:?}\"/>");
                }
                Geometry::Sphere { radius } => {
                    let _ = writeln!(out, "        <sphere radius=\"{radius:?}\"/>");
                }
                Geometry::Mesh { path, scale } => {
                    let _ = writeln!(out, "        <mesh filename=\"{}\" scale=\"{}\"/>", xml_escape(path), fmt3(*scale));
                }
            }
            let _ = writeln!(out, "      </geometry>");
            let [r, g, b] = v.color;
            let _ = writeln!(out, "      <material><color rgba=\"{r:?} {g:?} {b:?} 1.0\"/></material>");
            let _ = writeln!(out, "    </visual>");
        }
        let _ = writeln!(out, "  </link>");
    }
    for j in &model.joints {
        let _ = writeln!(out, "  <joint name=\"{}\" type=\"{}\">", xml_escape(&j.name), j.kind.as_str());
        let _ = writeln!(out, "    <parent link=\"{}\"/>", xml_escape(&j.parent));
        let _ = writeln!(out, "    <child link=\"{}\"/>", xml_escape(&j.child));
        write_origin(&mut out, "    ", &j.origin);
        if j.is_movable() {
            let _ = writeln!(out, "    <axis xyz=\"{}\"/>", fmt3(j.axis));
        }
        if let Some(l) = j.limits {
            let _ = writeln!(out, "    <limit lower=\"{:?}\" upper=\"{:?}\"/>", l.lower, l.upper);
        }
        let _ = writeln!(out, "  </joint>");
    }
    let _ = writeln!(out, "</robot>");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::f64::consts::FRAC_PI_2;

    const TWO_LINK: &str = r#"<robot name="t">
        <link name="base_link"/>
        <link name="link1"/>
        <joint name="j1" type="revolute">
          <parent link="base_link"/><child link="link1"/>
          <axis xyz="0 0 1"/><limit lower="-3" upper="3"/>
        </joint>
      </robot>"#;

    #[test]
    fn two_link_fixture() {
        let m = parse_robot_description(TWO_LINK).unwrap();
        assert_eq!(m.links.len(), 2);
        assert_eq!(m.joints.len(), 1);
        assert_eq!(m.root_link, "base_link");
        assert_eq!(m.joints[0].axis, Vec3::Z);
    }

    #[test]
    fn missing_child_link_is_orphan() {
        let xml = TWO_LINK.replace(r#"<link name="link1"/>"#, "");
        assert!(matches!(
            parse_robot_description(&xml),
            Err(RobotError::Kinematics(KinematicsError::OrphanLink(_)))
        ));
    }

    #[test]
    fn disconnected_link_is_orphan() {
        let xml = TWO_LINK.replace("</robot>", r#"<link name="floating_bit"/></robot>"#);
        assert!(matches!(
            parse_robot_description(&xml),
            Err(RobotError::Kinematics(KinematicsError::OrphanLink(_)))
        ));
    }

    #[test]
    fn cycle_and_duplicates() {
        let xml = r#"<robot name="c"><link name="a"/><link name="b"/>
          <joint name="ab" type="fixed"><parent link="a"/><child link="b"/></joint>
          <joint name="ba" type="fixed"><parent link="b"/><child link="a"/></joint></robot>"#;
        assert!(matches!(parse_robot_description(xml), Err(RobotError::Kinematics(KinematicsError::Cycle))));
        let dup = TWO_LINK.replace("</robot>", r#"<link name="l2"/><joint name="j1" type="fixed"><parent link="link1"/><child link="l2"/></joint></robot>"#);
        assert!(matches!(
            parse_robot_description(&dup),
            Err(RobotError::Kinematics(KinematicsError::DuplicateJoint(_)))
        ));
    }

    #[test]
    fn floating_joint_unsupported() {
        let xml = TWO_LINK.replace("type=\"revolute\"", "type=\"floating\"");
        assert!(matches!(parse_robot_description(&xml), Err(RobotError::UnsupportedJointType { .. })));
    }

    #[test]
    fn malformed_xml() {
        assert!(matches!(parse_robot_description("<robot><link name="), Err(RobotError::Xml(_))));
        assert!(matches!(parse_robot_description("<notrobot/>"), Err(RobotError::Xml(_))));
    }

    #[test]
    fn unknown_tags_warn() {
        let xml = TWO_LINK.replace("</robot>", "<gazebo reference=\"x\"/><transmission name=\"t\"/></robot>");
        let (m, warnings) = parse_robot_description_with_warnings(&xml).unwrap();
        assert_eq!(m.joints.len(), 1);
        assert_eq!(warnings.len(), 2);
    }

    #[test]
    fn rpy_quarter_turn() {
        let xml = TWO_LINK.replace("<axis", r#"<origin xyz="0 0 0" rpy="0 0 1.5707963"/><axis"#);
        let m = parse_robot_description(&xml).unwrap();
        let expected = RotationMatrix::from_rows_unchecked([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(m.joints[0].origin.transform().rotation.max_abs_diff(&expected) < 1e-6);
    }

    #[test]
    fn planar_closed_form() {
        let m = fixtures::planar_2link();
        let cfg: JointConfig = [("j1", FRAC_PI_2), ("j2", 0.0)].into_iter().collect();
        let p = marker_positions(&m, &cfg, &["end_link"]).unwrap()[0];
        assert!(p.max_abs_diff(Vec3::new(0.0, 2.0, 0.0)) < 1e-9);

        let (a, b) = (30f64.to_radians(), 45f64.to_radians());
        let cfg: JointConfig = [("j1", a), ("j2", b)].into_iter().collect();
        let p = marker_positions(&m, &cfg, &["end_link"]).unwrap()[0];
        let expected = Vec3::new(a.cos() + (a + b).cos(), a.sin() + (a + b).sin(), 0.0);
        assert!(p.max_abs_diff(expected) < 1e-9);
    }

    #[test]
    fn zero_config_is_static_chain() {
        let m = fixtures::gripper_2f();
        let zero: JointConfig = m.movable_joints().map(|j| (j.name.clone(), 0.0)).collect();
        let poses = forward_kinematics(&m, &zero, FkOptions::default()).unwrap();
        // walk each link back to the root composing static origins
        for link in &m.links {
            let mut t = HomogeneousMatrix::IDENTITY;
            let mut cur = link.name.clone();
            while let Some(j) = m.joints.iter().find(|j| j.child == cur) {
                t = j.origin.transform().compose(&t);
                cur = j.parent.clone();
            }
            assert!(poses[&link.name].max_abs_diff(&t) < 1e-12, "{}", link.name);
        }
    }

    #[test]
    fn markers_root_and_unknown() {
        let m = fixtures::planar_2link();
        let cfg: JointConfig = [("j1", 0.3), ("j2", -0.2)].into_iter().collect();
        assert_eq!(marker_positions(&m, &cfg, &["base_link"]).unwrap(), vec![Vec3::ZERO]);
        assert!(matches!(marker_positions(&m, &cfg, &["nope"]), Err(RobotError::UnknownLink(_))));
    }

    #[test]
    fn missing_and_out_of_limit_values() {
        let m = fixtures::planar_2link();
        let partial: JointConfig = [("j1", 0.3)].into_iter().collect();
        assert!(matches!(
            forward_kinematics(&m, &partial, FkOptions::default()),
            Err(RobotError::MissingJointValue(_))
        ));
        let wild: JointConfig = [("j1", 10.0), ("j2", 0.0)].into_iter().collect();
        assert!(matches!(
            forward_kinematics(&m, &wild, FkOptions { strict_limits: true }),
            Err(RobotError::ValueOutOfLimits { .. })
        ));
        // clamped: j1 limited to pi
        let clamped = forward_kinematics(&m, &wild, FkOptions::default()).unwrap();
        let lim = m.joint("j1").unwrap().limits.unwrap();
        let expect: JointConfig = [("j1", lim.upper), ("j2", 0.0)].into_iter().collect();
        let reference = forward_kinematics(&m, &expect, FkOptions::default()).unwrap();
        assert_eq!(clamped, reference);
        let extra: JointConfig = [("j1", 0.0), ("j2", 0.0), ("j9", 0.0)].into_iter().collect();
        assert!(matches!(forward_kinematics(&m, &extra, FkOptions::default()), Err(RobotError::UnknownJoint(_))));
    }

    #[test]
    fn fixtures_round_trip_and_tree_property() {
        for m in [fixtures::planar_2link(), fixtures::gripper_2f(), fixtures::dexhand_4f()] {
            assert_eq!(m.joints.len(), m.links.len() - 1);
            let again = parse_robot_description(&to_urdf(&m)).unwrap();
            assert_eq!(again, m);
        }
        assert_eq!(fixtures::dexhand_4f().movable_joints().filter(|j| j.kind == JointKind::Revolute).count(), 16);
        let g = fixtures::gripper_2f();
        assert_eq!(g.movable_joints().filter(|j| j.kind == JointKind::Revolute).count(), 6);
    }
}
