use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use super::{AttributeName, CanonicalKey, Gate, PolicyError, PolicyExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}", self.0)
    }
}

/// Identifier of a group of payloads sharing one policy. Same token rules as
/// attributes so the DAG dump stays whitespace-delimited.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FileGroupId(String);

impl FileGroupId {
    pub fn new(id: impl Into<String>) -> Result<Self, PolicyError> {
        let id = id.into();
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
            return Err(PolicyError::InvalidGroupId(id));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FileGroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParentRef {
    Data(usize),
    Node(NodeId),
}

impl fmt::Display for ParentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParentRef::Data(i) => write!(f, "D{i}"),
            ParentRef::Node(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Attribute(AttributeName),
    Link { gate: Gate, children: [NodeId; 2] },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub parents: Vec<ParentRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataNode {
    pub file_group_id: FileGroupId,
    pub root: NodeId,
}

/// Shared-node access structure. Nodes are stored in construction order, so
/// every child id is smaller than its parent's id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegratedAccessDag {
    data_nodes: Vec<DataNode>,
    nodes: Vec<DagNode>,
    dedup_index: BTreeMap<CanonicalKey, NodeId>,
}

/// Payloads collected under one canonical policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyGroup<P> {
    pub key: CanonicalKey,
    pub policy: PolicyExpr,
    pub payload_ids: Vec<P>,
}

/// Groups items by canonical policy, in order of first occurrence.
pub fn group_by_policy<P: Clone>(items: &[(P, PolicyExpr)]) -> Vec<PolicyGroup<P>> {
    let mut groups: Vec<PolicyGroup<P>> = Vec::new();
    let mut index: HashMap<CanonicalKey, usize> = HashMap::new();
    for (id, policy) in items {
        let key = policy.canonical_key();
        match index.get(&key) {
            Some(&g) => groups[g].payload_ids.push(id.clone()),
            None => {
                index.insert(key.clone(), groups.len());
                groups.push(PolicyGroup {
                    key,
                    policy: policy.clone(),
                    payload_ids: vec![id.clone()],
                });
            }
        }
    }
    groups
}

impl IntegratedAccessDag {
    /// Builds the DAG bottom-up, reusing any node whose canonical key has
    /// already been inserted.
    pub fn build(groups: &[(FileGroupId, PolicyExpr)]) -> Result<Self, PolicyError> {
        let mut dag = Self {
            data_nodes: Vec::with_capacity(groups.len()),
            nodes: Vec::new(),
            dedup_index: BTreeMap::new(),
        };
        let mut seen = BTreeSet::new();
        for (id, policy) in groups {
            if !seen.insert(id.clone()) {
                return Err(PolicyError::DuplicateGroup(id.to_string()));
            }
            let (root, _) = dag.insert(policy);
            let data_idx = dag.data_nodes.len();
            dag.nodes[root.0 as usize].parents.push(ParentRef::Data(data_idx));
            dag.data_nodes.push(DataNode {
                file_group_id: id.clone(),
                root,
            });
        }
        Ok(dag)
    }

    fn insert(&mut self, expr: &PolicyExpr) -> (NodeId, CanonicalKey) {
        let (kind, key) = match expr {
            PolicyExpr::Attr(a) => (NodeKind::Attribute(a.clone()), expr.canonical_key()),
            PolicyExpr::And(l, r) | PolicyExpr::Or(l, r) => {
                let gate = if matches!(expr, PolicyExpr::And(..)) { Gate::And } else { Gate::Or };
                let (lid, lkey) = self.insert(l);
                let (rid, rkey) = self.insert(r);
                let key = CanonicalKey::gate(gate, &lkey, &rkey);
                if let Some(&existing) = self.dedup_index.get(&key) {
                    return (existing, key);
                }
                // Children ordered by key so commuted inputs produce identical nodes.
                let children = if lkey <= rkey { [lid, rid] } else { [rid, lid] };
                (NodeKind::Link { gate, children }, key)
            }
        };
        if let Some(&existing) = self.dedup_index.get(&key) {
            return (existing, key);
        }
        let id = NodeId(self.nodes.len() as u32);
        if let NodeKind::Link { children, .. } = &kind {
            self.nodes[children[0].0 as usize].parents.push(ParentRef::Node(id));
            if children[1] != children[0] {
                self.nodes[children[1].0 as usize].parents.push(ParentRef::Node(id));
            }
        }
        self.nodes.push(DagNode {
            id,
            kind,
            parents: Vec::new(),
        });
        self.dedup_index.insert(key.clone(), id);
        (id, key)
    }

    pub fn data_nodes(&self) -> &[DataNode] {
        &self.data_nodes
    }

    pub fn nodes(&self) -> &[DagNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &DagNode {
        &self.nodes[id.0 as usize]
    }

    pub fn link_nodes(&self) -> impl Iterator<Item = &DagNode> {
        self.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Link { .. }))
    }

    pub fn attribute_nodes(&self) -> impl Iterator<Item = &DagNode> {
        self.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Attribute(_)))
    }

    pub fn lookup(&self, key: &CanonicalKey) -> Option<NodeId> {
        self.dedup_index.get(key).copied()
    }

    pub fn data_node_index(&self, id: &FileGroupId) -> Option<usize> {
        self.data_nodes.iter().position(|d| &d.file_group_id == id)
    }

    /// Link plus attribute nodes; data nodes are counted separately.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Threshold satisfaction evaluated bottom-up over the shared structure.
    pub fn satisfied_nodes(&self, attrs: &BTreeSet<AttributeName>) -> Vec<bool> {
        let mut sat = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.kind {
                NodeKind::Attribute(a) => attrs.contains(a),
                NodeKind::Link { gate, children } => {
                    let n = children.iter().filter(|c| sat[c.0 as usize]).count();
                    n >= gate.threshold().min(if children[0] == children[1] { 1 } else { 2 })
                }
            };
            sat.push(v);
        }
        sat
    }

    /// Which data nodes an attribute set reaches, by index.
    pub fn satisfied_data_nodes(&self, attrs: &BTreeSet<AttributeName>) -> Vec<bool> {
        let sat = self.satisfied_nodes(attrs);
        self.data_nodes.iter().map(|d| sat[d.root.0 as usize]).collect()
    }

    /// Rebuilds the policy expression rooted at a node.
    pub fn expr_at(&self, id: NodeId) -> PolicyExpr {
        match &self.node(id).kind {
            NodeKind::Attribute(a) => PolicyExpr::Attr(a.clone()),
            NodeKind::Link { gate, children } => {
                PolicyExpr::gate(*gate, self.expr_at(children[0]), self.expr_at(children[1]))
            }
        }
    }

    /// Deterministic text form, one node per line:
    /// `<id> <kind> children=<ids|-> parents=<ids|->`.
    pub fn dump(&self) -> String {
        fn list<T: fmt::Display>(items: &[T]) -> String {
            if items.is_empty() {
                "-".to_string()
            } else {
                items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
            }
        }
        let mut out = String::new();
        for (i, d) in self.data_nodes.iter().enumerate() {
            let _ = writeln!(out, "D{i} data:{} children={} parents=-", d.file_group_id, d.root);
        }
        for n in &self.nodes {
            let (kind, children) = match &n.kind {
                NodeKind::Attribute(a) => (format!("attr:{a}"), Vec::new()),
                NodeKind::Link { gate, children } => (gate.keyword().to_string(), children.to_vec()),
            };
            let _ = writeln!(out, "{} {kind} children={} parents={}", n.id, list(&children), list(&n.parents));
        }
        out
    }

    /// Parses [`dump`](Self::dump) output, checking that it describes a
    /// well-formed DAG in construction order.
    pub fn from_dump(text: &str) -> Result<Self, PolicyError> {
        let mut data = Vec::new();
        let mut declared: Vec<(NodeId, NodeKind, Vec<ParentRef>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let bad = |message: &str| PolicyError::MalformedDump {
                line: lineno + 1,
                message: message.to_string(),
            };
            let fields: Vec<&str> = line.split(' ').collect();
            let [id, kind, children, parents] = fields[..] else {
                return Err(bad("expected four fields"));
            };
            let children = children.strip_prefix("children=").ok_or_else(|| bad("missing children="))?;
            let parents = parents.strip_prefix("parents=").ok_or_else(|| bad("missing parents="))?;
            if let Some(idx) = id.strip_prefix('D') {
                let idx: usize = idx.parse().map_err(|_| bad("bad data node id"))?;
                if idx != data.len() || !declared.is_empty() {
                    return Err(bad("data nodes out of order"));
                }
                let group = kind.strip_prefix("data:").ok_or_else(|| bad("expected data kind"))?;
                let group = FileGroupId::new(group).map_err(|_| bad("bad group id"))?;
                let root = parse_node_id(children).ok_or_else(|| bad("bad root id"))?;
                data.push(DataNode {
                    file_group_id: group,
                    root,
                });
                continue;
            }
            let nid = parse_node_id(id).ok_or_else(|| bad("bad node id"))?;
            if nid.0 as usize != declared.len() {
                return Err(bad("node ids out of order"));
            }
            let child_ids: Vec<NodeId> = parse_list(children, parse_node_id).ok_or_else(|| bad("bad children"))?;
            let kind = if let Some(attr) = kind.strip_prefix("attr:") {
                if !child_ids.is_empty() {
                    return Err(bad("attribute node with children"));
                }
                NodeKind::Attribute(AttributeName::new(attr).map_err(|_| bad("bad attribute"))?)
            } else {
                let gate = match kind {
                    "and" => Gate::And,
                    "or" => Gate::Or,
                    _ => return Err(bad("unknown node kind")),
                };
                let [a, b] = child_ids[..] else {
                    return Err(bad("link node needs two children"));
                };
                if a >= nid || b >= nid {
                    return Err(bad("child does not precede parent"));
                }
                NodeKind::Link { gate, children: [a, b] }
            };
            let parent_refs = parse_list(parents, parse_parent_ref).ok_or_else(|| bad("bad parents"))?;
            declared.push((nid, kind, parent_refs));
        }

        let mut dag = Self {
            data_nodes: Vec::new(),
            nodes: Vec::with_capacity(declared.len()),
            dedup_index: BTreeMap::new(),
        };
        let mut keys: Vec<CanonicalKey> = Vec::with_capacity(declared.len());
        for (id, kind, _) in &declared {
            let key = match kind {
                NodeKind::Attribute(a) => CanonicalKey::attribute(a),
                NodeKind::Link { gate, children } => {
                    CanonicalKey::gate(*gate, &keys[children[0].0 as usize], &keys[children[1].0 as usize])
                }
            };
            if dag.dedup_index.insert(key.clone(), *id).is_some() {
                return Err(PolicyError::MalformedDump {
                    line: data.len() + id.0 as usize + 1,
                    message: "duplicate sub-expression".into(),
                });
            }
            keys.push(key);
            if let NodeKind::Link { children, .. } = kind {
                dag.nodes[children[0].0 as usize].parents.push(ParentRef::Node(*id));
                if children[1] != children[0] {
                    dag.nodes[children[1].0 as usize].parents.push(ParentRef::Node(*id));
                }
            }
            dag.nodes.push(DagNode {
                id: *id,
                kind: kind.clone(),
                parents: Vec::new(),
            });
        }
        for (i, d) in data.iter().enumerate() {
            let Some(root) = dag.nodes.get_mut(d.root.0 as usize) else {
                return Err(PolicyError::MalformedDump {
                    line: i + 1,
                    message: "dangling root".into(),
                });
            };
            root.parents.push(ParentRef::Data(i));
        }
        dag.data_nodes = data;
        // Parent lists are derived; the declared ones must agree once sorted.
        for ((id, _, declared_parents), node) in declared.iter().zip(&dag.nodes) {
            let mut a = declared_parents.clone();
            let mut b = node.parents.clone();
            a.sort();
            b.sort();
            if a != b {
                return Err(PolicyError::MalformedDump {
                    line: dag.data_nodes.len() + id.0 as usize + 1,
                    message: "parent list disagrees with structure".into(),
                });
            }
        }
        // Restore declared parent order so dump(from_dump(x)) == x.
        for ((_, _, declared_parents), node) in declared.into_iter().zip(dag.nodes.iter_mut()) {
            node.parents = declared_parents;
        }
        Ok(dag)
    }
}

fn parse_node_id(s: &str) -> Option<NodeId> {
    s.strip_prefix('N')?.parse().ok().map(NodeId)
}

fn parse_parent_ref(s: &str) -> Option<ParentRef> {
    if let Some(d) = s.strip_prefix('D') {
        d.parse().ok().map(ParentRef::Data)
    } else {
        parse_node_id(s).map(ParentRef::Node)
    }
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
    if s == "-" {
        return Some(Vec::new());
    }
    s.split(',').map(f).collect()
}
