use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{Matrix4, Rotation3, Translation3};
use roxmltree::{Document, Node};

use super::LoadError;
use crate::artmodel::{
    sanitize_segment, AttachShape, ConnectJoint, CreateBody, JointKind, Mimic, Operation, OperationHistory, Path,
    PoseRef,
};
use crate::geometry::{Shape, IDENTITY_POSE};

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfGeometry {
    pub shape: Shape,
    pub origin: [[f64; 4]; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfLink {
    pub name: String,
    pub geometry: Vec<UrdfGeometry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfLimits {
    pub lower: f64,
    pub upper: f64,
    pub velocity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfMimic {
    pub joint: String,
    pub multiplier: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrdfJoint {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    pub origin: [[f64; 4]; 4],
    pub axis: [f64; 3],
    pub limits: Option<UrdfLimits>,
    pub mimic: Option<UrdfMimic>,
}

/// The supported URDF subset: links with primitive geometry and joints.
#[derive(Debug, Clone, PartialEq)]
pub struct UrdfDocument {
    pub name: String,
    pub links: Vec<UrdfLink>,
    pub joints: Vec<UrdfJoint>,
}

fn parse_err(node: &Node, msg: impl std::fmt::Display) -> LoadError {
    LoadError::Parse(format!("<{}> {msg}", node.tag_name().name()))
}

fn floats<const N: usize>(node: &Node, attr: &str, default: [f64; N]) -> Result<[f64; N], LoadError> {
    let Some(text) = node.attribute(attr) else {
        return Ok(default);
    };
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| parse_err(node, format!("attribute `{attr}`: {e}")))?;
    let arr: [f64; N] = vals
        .try_into()
        .map_err(|_| parse_err(node, format!("attribute `{attr}` needs {N} numbers")))?;
    if arr.iter().any(|v| !v.is_finite()) {
        return Err(parse_err(node, format!("attribute `{attr}` must be finite")));
    }
    Ok(arr)
}

fn float(node: &Node, attr: &str) -> Result<Option<f64>, LoadError> {
    node.attribute(attr)
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(node, format!("attribute `{attr}` is not a finite number")))
        })
        .transpose()
}

fn required<'a>(node: &Node<'a, '_>, attr: &str) -> Result<&'a str, LoadError> {
    node.attribute(attr)
        .ok_or_else(|| parse_err(node, format!("missing attribute `{attr}`")))
}

fn child<'a, 'i>(node: &Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

/// Homogeneous transform from `xyz` and fixed-axis roll-pitch-yaw.
pub fn origin_transform(xyz: [f64; 3], rpy: [f64; 3]) -> [[f64; 4]; 4] {
    let r = Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]);
    let m: Matrix4<f64> = Translation3::new(xyz[0], xyz[1], xyz[2]).to_homogeneous() * r.to_homogeneous();
    let mut out = IDENTITY_POSE;
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    out
}

fn origin_of(node: &Node) -> Result<[[f64; 4]; 4], LoadError> {
    match child(node, "origin") {
        None => Ok(IDENTITY_POSE),
        Some(o) => Ok(origin_transform(floats(&o, "xyz", [0.0; 3])?, floats(&o, "rpy", [0.0; 3])?)),
    }
}

fn positive(node: &Node, v: f64, what: &str) -> Result<f64, LoadError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(parse_err(node, format!("{what} must be positive")))
    }
}

fn parse_geometry(elem: &Node, link: &str) -> Result<Option<UrdfGeometry>, LoadError> {
    let Some(geom) = child(elem, "geometry") else {
        return Ok(None);
    };
    let Some(prim) = geom.children().find(|c| c.is_element()) else {
        return Ok(None);
    };
    let shape = match prim.tag_name().name() {
        "box" => {
            let size = floats(&prim, "size", [0.0; 3])?;
            for s in size {
                positive(&prim, s, "box size")?;
            }
            Shape::Box {
                half_extents: size.map(|s| s / 2.0),
            }
        }
        "sphere" => {
            let r = float(&prim, "radius")?.ok_or_else(|| parse_err(&prim, "missing radius"))?;
            Shape::Sphere {
                r: positive(&prim, r, "radius")?,
            }
        }
        "cylinder" => {
            let r = float(&prim, "radius")?.ok_or_else(|| parse_err(&prim, "missing radius"))?;
            let l = float(&prim, "length")?.ok_or_else(|| parse_err(&prim, "missing length"))?;
            // the capsule's axis segment spans the cylinder length
            Shape::Capsule {
                r: positive(&prim, r, "radius")?,
                half_length: positive(&prim, l, "length")? / 2.0,
            }
        }
        other => {
            return Err(LoadError::UnsupportedGeometry(format!("{other} in link `{link}`")));
        }
    };
    Ok(Some(UrdfGeometry {
        shape,
        origin: origin_of(elem)?,
    }))
}

impl UrdfDocument {
    pub fn parse(xml: &str) -> Result<Self, LoadError> {
        let doc = Document::parse(xml).map_err(|e| LoadError::Parse(e.to_string()))?;
        let robot = doc.root_element();
        if !robot.has_tag_name("robot") {
            return Err(parse_err(&robot, "root element must be <robot>"));
        }
        let name = required(&robot, "name")?.to_string();
        let mut links = Vec::new();
        let mut joints = Vec::new();
        for node in robot.children().filter(|n| n.is_element()) {
            match node.tag_name().name() {
                "link" => {
                    let lname = required(&node, "name")?.to_string();
                    // collision geometry is preferred; visual is the fallback
                    let mut geometry = Vec::new();
                    for tag in ["collision", "visual"] {
                        for elem in node.children().filter(|c| c.has_tag_name(tag)) {
                            if let Some(g) = parse_geometry(&elem, &lname)? {
                                geometry.push(g);
                            }
                        }
                        if !geometry.is_empty() {
                            break;
                        }
                    }
                    links.push(UrdfLink { name: lname, geometry });
                }
                "joint" => joints.push(Self::parse_joint(&node)?),
                _ => {}
            }
        }
        let doc = UrdfDocument { name, links, joints };
        doc.validate()?;
        Ok(doc)
    }

    fn parse_joint(node: &Node) -> Result<UrdfJoint, LoadError> {
        let name = required(node, "name")?.to_string();
        let kind = match required(node, "type")? {
            "fixed" => JointKind::Fixed,
            "revolute" => JointKind::Revolute,
            "continuous" => JointKind::Continuous,
            "prismatic" => JointKind::Prismatic,
            t @ ("planar" | "floating") => return Err(LoadError::UnsupportedJoint(t.to_string())),
            t => return Err(parse_err(node, format!("unknown joint type `{t}`"))),
        };
        let link_ref = |tag: &str| {
            child(node, tag)
                .ok_or_else(|| parse_err(node, format!("joint `{name}` lacks <{tag}>")))
                .and_then(|c| required(&c, "link").map(str::to_string))
        };
        let parent = link_ref("parent")?;
        let child_link = link_ref("child")?;
        let axis = match child(node, "axis") {
            Some(a) => floats(&a, "xyz", [1.0, 0.0, 0.0])?,
            None => [1.0, 0.0, 0.0],
        };
        let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
        if kind != JointKind::Fixed && norm <= 1e-9 {
            return Err(parse_err(node, format!("joint `{name}` has a zero axis")));
        }
        let axis = if norm > 1e-9 { axis.map(|v| v / norm) } else { axis };
        let limits = match child(node, "limit") {
            Some(l) => Some(UrdfLimits {
                lower: float(&l, "lower")?.unwrap_or(0.0),
                upper: float(&l, "upper")?.unwrap_or(0.0),
                velocity: float(&l, "velocity")?,
            }),
            None => None,
        };
        let mimic = match child(node, "mimic") {
            Some(m) => Some(UrdfMimic {
                joint: required(&m, "joint")?.to_string(),
                multiplier: float(&m, "multiplier")?.unwrap_or(1.0),
                offset: float(&m, "offset")?.unwrap_or(0.0),
            }),
            None => None,
        };
        if mimic.is_none() && matches!(kind, JointKind::Revolute | JointKind::Prismatic) {
            let l = limits
                .as_ref()
                .ok_or_else(|| parse_err(node, format!("joint `{name}` needs <limit>")))?;
            if l.lower > l.upper {
                return Err(parse_err(node, format!("joint `{name}` has lower > upper")));
            }
        }
        Ok(UrdfJoint {
            name,
            kind,
            parent,
            child: child_link,
            origin: origin_of(node)?,
            axis,
            limits,
            mimic,
        })
    }

    fn validate(&self) -> Result<(), LoadError> {
        let mut names = BTreeSet::new();
        for l in &self.links {
            if !names.insert(l.name.as_str()) {
                return Err(LoadError::Parse(format!("duplicate link `{}`", l.name)));
            }
        }
        let mut joint_names = BTreeSet::new();
        let mut has_parent = BTreeSet::new();
        for j in &self.joints {
            if !joint_names.insert(j.name.as_str()) {
                return Err(LoadError::Parse(format!("duplicate joint `{}`", j.name)));
            }
            for l in [&j.parent, &j.child] {
                if !names.contains(l.as_str()) {
                    return Err(LoadError::Parse(format!("joint `{}` references unknown link `{l}`", j.name)));
                }
            }
            if !has_parent.insert(j.child.as_str()) {
                return Err(LoadError::CycleError(format!("link `{}` has several parent joints", j.child)));
            }
            if let Some(m) = &j.mimic {
                if !self.joints.iter().any(|o| o.name == m.joint) {
                    return Err(LoadError::Parse(format!("joint `{}` mimics unknown joint `{}`", j.name, m.joint)));
                }
            }
        }
        Ok(())
    }

    fn link_path(&self, link: &str) -> Result<Path, LoadError> {
        Path::new(&format!("{}.{}", sanitize_segment(&self.name), sanitize_segment(link)))
            .map_err(|e| LoadError::Parse(e.to_string()))
    }

    /// Variable name of a joint's position.
    pub fn joint_variable(&self, joint: &str) -> String {
        format!("{}.{}", sanitize_segment(&self.name), sanitize_segment(joint))
    }

    /// Resolves a mimic chain to `(base joint, multiplier, offset)`.
    fn resolve_mimic(&self, joint: &UrdfJoint) -> Result<Option<(String, f64, f64)>, LoadError> {
        let by_name: BTreeMap<&str, &UrdfJoint> = self.joints.iter().map(|j| (j.name.as_str(), j)).collect();
        let Some(mut m) = joint.mimic.as_ref() else {
            return Ok(None);
        };
        let (mut mul, mut off) = (1.0, 0.0);
        let mut seen = BTreeSet::from([joint.name.as_str()]);
        loop {
            // value = mul * (m.multiplier * target + m.offset) + off
            off += mul * m.offset;
            mul *= m.multiplier;
            let target = by_name[m.joint.as_str()];
            if !seen.insert(target.name.as_str()) {
                return Err(LoadError::MimicCycle(joint.name.clone()));
            }
            match &target.mimic {
                Some(next) => m = next,
                None => return Ok(Some((target.name.clone(), mul, off))),
            }
        }
    }

    /// Joint indices ordered so parents precede children and mimic targets
    /// precede mimickers.
    fn joint_order(&self) -> Result<Vec<usize>, LoadError> {
        let n = self.joints.len();
        let index: BTreeMap<&str, usize> = self.joints.iter().enumerate().map(|(i, j)| (j.name.as_str(), i)).collect();
        let by_child: BTreeMap<&str, usize> =
            self.joints.iter().enumerate().map(|(i, j)| (j.child.as_str(), i)).collect();
        let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let mut mimic_deps: Vec<Option<usize>> = vec![None; n];
        for (i, j) in self.joints.iter().enumerate() {
            if let Some(&p) = by_child.get(j.parent.as_str()) {
                deps[i].insert(p);
            }
            if let Some(m) = &j.mimic {
                let t = index[m.joint.as_str()];
                deps[i].insert(t);
                mimic_deps[i] = Some(t);
            }
        }
        // mimic-only cycles are reported as such
        for i in 0..n {
            let mut cur = i;
            for _ in 0..=n {
                match mimic_deps[cur] {
                    Some(t) if t == i => return Err(LoadError::MimicCycle(self.joints[i].name.clone())),
                    Some(t) => cur = t,
                    None => break,
                }
            }
        }
        let mut indegree: Vec<usize> = deps.iter().map(BTreeSet::len).collect();
        let mut ready: VecDeque<usize> = (0..n).filter(|i| indegree[*i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_front() {
            order.push(i);
            for (k, d) in deps.iter().enumerate() {
                if d.contains(&i) {
                    indegree[k] -= 1;
                    if indegree[k] == 0 {
                        ready.push_back(k);
                    }
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|i| !order.contains(i)).expect("some joint is unordered");
            return Err(LoadError::CycleError(format!("joint `{}` is part of a loop", self.joints[stuck].name)));
        }
        Ok(order)
    }

    /// The loading sequence: all bodies first, then the connections.
    pub fn to_history(&self) -> Result<OperationHistory, LoadError> {
        let mut h = OperationHistory::new();
        let push = |h: &mut OperationHistory, tag: String, op| {
            h.push(tag, op).map_err(|e| LoadError::Parse(e.to_string()))
        };
        for l in &self.links {
            let p = self.link_path(&l.name)?;
            push(
                &mut h,
                format!("create {p}"),
                Operation::CreateBody(CreateBody {
                    name: p,
                    pose: PoseRef::Literal(IDENTITY_POSE),
                }),
            )?;
        }
        for i in self.joint_order()? {
            let j = &self.joints[i];
            let parent = self.link_path(&j.parent)?;
            let child = self.link_path(&j.child)?;
            let mimic = self.resolve_mimic(j)?.map(|(target, multiplier, offset)| Mimic {
                joint: self.joint_variable(&target),
                multiplier,
                offset,
            });
            let op = ConnectJoint {
                kind: j.kind,
                parent: parent.clone(),
                child: child.clone(),
                origin: j.origin,
                axis: j.axis,
                var: (j.kind != JointKind::Fixed && mimic.is_none()).then(|| self.joint_variable(&j.name)),
                limits: j.limits.as_ref().map(|l| [l.lower, l.upper]),
                vel_limit: j.limits.as_ref().and_then(|l| l.velocity),
                mimic,
            };
            push(&mut h, format!("connect {parent} {child}"), Operation::ConnectJoint(op))?;
        }
        for l in &self.links {
            let p = self.link_path(&l.name)?;
            for (k, g) in l.geometry.iter().enumerate() {
                let name = if k == 0 { p.to_string() } else { format!("{p}_{k}") };
                push(
                    &mut h,
                    format!("shape {name}"),
                    Operation::AttachShape(AttachShape {
                        name,
                        attach_to: p.clone(),
                        shape: g.shape,
                        pose: g.origin,
                    }),
                )?;
            }
        }
        Ok(h)
    }
}

/// Parses URDF text into a loading history.
pub fn parse_urdf(xml: &str) -> Result<OperationHistory, LoadError> {
    UrdfDocument::parse(xml)?.to_history()
}
