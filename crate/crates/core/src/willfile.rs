//! The portable digital-will document.
//!
//! Core elements live in the [`NAMESPACE`] namespace. Elements from any other
//! namespace directly under `<will>` are provider extensions: they are kept
//! as the exact bytes they occupied in the source document and written back
//! verbatim after the core elements, together with the root's namespace
//! declarations for them. Foreign content anywhere else is rejected.
//!
//! ```xml
//! <will xmlns="urn:heirloom:will:1" id="will-1">
//!   <creator id="alice"/>
//!   <heirs>
//!     <heir id="bob" contact="bob@example.org" publicKey="02ab…">
//!       <attribute>family</attribute>
//!     </heir>
//!   </heirs>
//!   <platforms>
//!     <platform id="social" token="placeholder:social">
//!       <asset>posts</asset>
//!     </platform>
//!   </platforms>
//!   <policies>
//!     <policy asset="social/posts">(family or friend)</policy>
//!   </policies>
//!   <trigger voteThreshold="1" freezeSeconds="3600" authorityOverride="true"/>
//!   <storage threshold="2">
//!     <location>loc-a</location>
//!     <location>loc-b</location>
//!   </storage>
//! </will>
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::name::ResolveResult;
use quick_xml::NsReader;
use thiserror::Error;

use crate::policy::{parse_policy, AttributeName, PolicyError, PolicyExpr};

pub const NAMESPACE: &str = "urn:heirloom:will:1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WillError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("policy error at {path}: {source}")]
    Policy { path: String, source: PolicyError },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heir {
    pub id: String,
    pub contact: String,
    /// Hex SEC1 public key the heir's decryption key is sealed to.
    pub public_key: String,
    pub attributes: BTreeSet<AttributeName>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlatformLink {
    pub id: String,
    /// Opaque access-token placeholder; never a live credential.
    pub token: String,
    pub assets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentPolicy {
    /// `platform/asset`
    pub asset: String,
    pub policy: PolicyExpr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerConfig {
    pub vote_threshold: u32,
    pub freeze_seconds: u64,
    pub authority_override: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoragePrefs {
    pub locations: Vec<String>,
    pub threshold: u32,
}

/// A foreign-namespace element kept byte for byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extension {
    pub xml: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitalWill {
    pub will_id: String,
    pub creator_id: String,
    pub heirs: Vec<Heir>,
    pub platforms: Vec<PlatformLink>,
    pub policies: Vec<ContentPolicy>,
    pub trigger: TriggerConfig,
    pub storage: StoragePrefs,
    /// Foreign `xmlns:prefix` declarations on the root element.
    pub namespaces: BTreeMap<String, String>,
    pub extensions: Vec<Extension>,
}

impl DigitalWill {
    pub fn heir(&self, id: &str) -> Option<&Heir> {
        self.heirs.iter().find(|h| h.id == id)
    }

    pub fn policy_for(&self, platform: &str, asset: &str) -> Option<&PolicyExpr> {
        let selector = format!("{platform}/{asset}");
        self.policies
            .iter()
            .find(|p| p.asset == selector)
            .map(|p| &p.policy)
    }

    /// Checks every structural invariant; the message names the first
    /// violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.will_id.is_empty() || self.creator_id.is_empty() {
            return Err("will and creator ids must be non-empty".into());
        }
        if self.heirs.is_empty() {
            return Err("a will needs at least one heir".into());
        }
        unique(self.heirs.iter().map(|h| h.id.as_str()), "heir id")?;
        if self.heirs.iter().any(|h| h.id.is_empty()) {
            return Err("heir ids must be non-empty".into());
        }
        let t = self.trigger.vote_threshold as usize;
        if t < 1 || t > self.heirs.len() {
            return Err(format!(
                "vote threshold {t} outside 1..={}",
                self.heirs.len()
            ));
        }
        if self.platforms.is_empty() {
            return Err("a will needs at least one platform".into());
        }
        unique(self.platforms.iter().map(|p| p.id.as_str()), "platform id")?;
        let mut selectors = BTreeSet::new();
        for p in &self.platforms {
            if p.id.is_empty() || p.id.contains('/') {
                return Err(format!("invalid platform id {:?}", p.id));
            }
            for a in &p.assets {
                if a.is_empty() || a.contains('/') {
                    return Err(format!("invalid asset id {a:?} on {}", p.id));
                }
                if !selectors.insert(format!("{}/{a}", p.id)) {
                    return Err(format!("duplicate asset {}/{a}", p.id));
                }
            }
        }
        let mut covered = BTreeSet::new();
        for cp in &self.policies {
            if !selectors.contains(&cp.asset) {
                return Err(format!("policy for undeclared asset {}", cp.asset));
            }
            if !covered.insert(cp.asset.as_str()) {
                return Err(format!("more than one policy for {}", cp.asset));
            }
        }
        if let Some(missing) = selectors.iter().find(|s| !covered.contains(s.as_str())) {
            return Err(format!("asset {missing} has no content policy"));
        }
        let locs = &self.storage.locations;
        unique(locs.iter().map(String::as_str), "storage location")?;
        if locs.len() < 2 || locs.len() > crate::sharding::MAX_SHARES {
            return Err(format!("{} storage locations; need 2..=255", locs.len()));
        }
        let st = self.storage.threshold as usize;
        if st < 2 || st > locs.len() {
            return Err(format!("storage threshold {st} outside 2..={}", locs.len()));
        }
        Ok(())
    }

    /// Soft problems that do not block deployment.
    pub fn warnings(&self) -> Vec<String> {
        let policy_attrs: BTreeSet<AttributeName> = self
            .policies
            .iter()
            .flat_map(|p| p.policy.attributes())
            .collect();
        self.heirs
            .iter()
            .filter(|h| h.attributes.is_disjoint(&policy_attrs))
            .map(|h| format!("heir {} holds no attribute used by any policy", h.id))
            .collect()
    }
}

fn unique<'a>(ids: impl Iterator<Item = &'a str>, what: &str) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(format!("duplicate {what} {id:?}"));
        }
    }
    Ok(())
}

pub fn serialize_xml(will: &DigitalWill) -> Result<Vec<u8>, WillError> {
    will.validate().map_err(WillError::InvariantViolation)?;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    write!(out, "<will xmlns=\"{NAMESPACE}\"").unwrap();
    for (prefix, uri) in &will.namespaces {
        write!(out, " xmlns:{prefix}=\"{}\"", escape(uri)).unwrap();
    }
    writeln!(out, " id=\"{}\">", escape(&will.will_id)).unwrap();
    writeln!(out, "  <creator id=\"{}\"/>", escape(&will.creator_id)).unwrap();

    out.push_str("  <heirs>\n");
    for h in &will.heirs {
        write!(
            out,
            "    <heir id=\"{}\" contact=\"{}\" publicKey=\"{}\"",
            escape(&h.id),
            escape(&h.contact),
            escape(&h.public_key)
        )
        .unwrap();
        if h.attributes.is_empty() {
            out.push_str("/>\n");
        } else {
            out.push_str(">\n");
            for a in &h.attributes {
                writeln!(out, "      <attribute>{}</attribute>", a.as_str()).unwrap();
            }
            out.push_str("    </heir>\n");
        }
    }
    out.push_str("  </heirs>\n");

    out.push_str("  <platforms>\n");
    for p in &will.platforms {
        write!(out, "    <platform id=\"{}\" token=\"{}\"", escape(&p.id), escape(&p.token)).unwrap();
        if p.assets.is_empty() {
            out.push_str("/>\n");
        } else {
            out.push_str(">\n");
            for a in &p.assets {
                writeln!(out, "      <asset>{}</asset>", escape(a)).unwrap();
            }
            out.push_str("    </platform>\n");
        }
    }
    out.push_str("  </platforms>\n");

    out.push_str("  <policies>\n");
    for cp in &will.policies {
        writeln!(out, "    <policy asset=\"{}\">{}</policy>", escape(&cp.asset), escape(&cp.policy.to_string())).unwrap();
    }
    out.push_str("  </policies>\n");

    let t = &will.trigger;
    writeln!(
        out,
        "  <trigger voteThreshold=\"{}\" freezeSeconds=\"{}\" authorityOverride=\"{}\"/>",
        t.vote_threshold, t.freeze_seconds, t.authority_override
    )
    .unwrap();
    writeln!(out, "  <storage threshold=\"{}\">", will.storage.threshold).unwrap();
    for l in &will.storage.locations {
        writeln!(out, "    <location>{}</location>", escape(l)).unwrap();
    }
    out.push_str("  </storage>\n");
    for e in &will.extensions {
        writeln!(out, "  {}", e.xml).unwrap();
    }
    out.push_str("</will>\n");
    Ok(out.into_bytes())
}

pub fn parse_xml(bytes: &[u8]) -> Result<DigitalWill, WillError> {
    let text = std::str::from_utf8(bytes).map_err(|e| WillError::Xml(e.to_string()))?;
    let mut p = Parser {
        reader: NsReader::from_str(text),
        text,
    };
    p.reader.config_mut().trim_text(false);
    let will = p.document()?;
    will.validate().map_err(|message| WillError::SchemaViolation {
        path: "/will".into(),
        message,
    })?;
    Ok(will)
}

fn violation(path: &str, message: impl Into<String>) -> WillError {
    WillError::SchemaViolation {
        path: path.to_string(),
        message: message.into(),
    }
}

fn xml_err(e: impl std::fmt::Display) -> WillError {
    WillError::Xml(e.to_string())
}

/// An element start from the core namespace, with its attributes decoded.
struct Element {
    name: String,
    attrs: BTreeMap<String, String>,
    empty: bool,
}

impl Element {
    fn take(&mut self, path: &str, key: &str) -> Result<String, WillError> {
        self.attrs
            .remove(key)
            .ok_or_else(|| violation(path, format!("missing attribute {key}")))
    }

    fn finish(&self, path: &str) -> Result<(), WillError> {
        match self.attrs.keys().next() {
            Some(k) => Err(violation(path, format!("unexpected attribute {k}"))),
            None => Ok(()),
        }
    }
}

enum Item {
    Core(Element),
    Foreign { start: usize, end: usize },
    End,
}

struct Parser<'a> {
    reader: NsReader<&'a [u8]>,
    text: &'a str,
}

impl<'a> Parser<'a> {
    /// Next structural item, skipping whitespace, comments and the prolog.
    /// Foreign elements are skipped whole and reported by byte span.
    fn next(&mut self, path: &str) -> Result<Item, WillError> {
        loop {
            let start = self.reader.buffer_position() as usize;
            let (ns, event) = self.reader.read_resolved_event().map_err(xml_err)?;
            match event {
                Event::Start(e) if !is_core(&ns) => {
                    self.reader.read_to_end(e.name()).map_err(xml_err)?;
                    let end = self.reader.buffer_position() as usize;
                    return Ok(Item::Foreign { start, end });
                }
                Event::Empty(_) if !is_core(&ns) => {
                    let end = self.reader.buffer_position() as usize;
                    return Ok(Item::Foreign { start, end });
                }
                Event::Start(e) => return self.core(&e, false, path).map(Item::Core),
                Event::Empty(e) => return self.core(&e, true, path).map(Item::Core),
                Event::End(_) => return Ok(Item::End),
                Event::Text(t) => {
                    let t = t.unescape().map_err(xml_err)?;
                    if !t.trim().is_empty() {
                        return Err(violation(path, format!("unexpected text {:?}", t.trim())));
                    }
                }
                Event::CData(_) => return Err(violation(path, "unexpected CDATA")),
                Event::Eof => return Err(WillError::Xml(format!("unexpected end of document in {path}"))),
                Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {}
            }
        }
    }

    fn core(&self, e: &BytesStart<'_>, empty: bool, path: &str) -> Result<Element, WillError> {
        let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
        let mut attrs = BTreeMap::new();
        for a in e.attributes() {
            let a = a.map_err(xml_err)?;
            if a.key.as_namespace_binding().is_some() {
                continue;
            }
            let (ns, local) = self.reader.resolve_attribute(a.key);
            if !matches!(ns, ResolveResult::Unbound) {
                return Err(violation(path, "namespaced attributes are not allowed on core elements"));
            }
            let value = a.unescape_value().map_err(xml_err)?.into_owned();
            attrs.insert(String::from_utf8_lossy(local.as_ref()).into_owned(), value);
        }
        Ok(Element { name, attrs, empty })
    }

    fn text_content(&mut self, path: &str) -> Result<String, WillError> {
        let mut out = String::new();
        loop {
            match self.reader.read_event().map_err(xml_err)? {
                Event::Text(t) => out.push_str(&t.unescape().map_err(xml_err)?),
                Event::CData(c) => out.push_str(&String::from_utf8_lossy(&c)),
                Event::Comment(_) => {}
                Event::End(_) => return Ok(out.trim().to_string()),
                Event::Eof => return Err(WillError::Xml(format!("unexpected end of document in {path}"))),
                _ => return Err(violation(path, "expected text only")),
            }
        }
    }

    /// Children of a core element that may only contain `child` elements
    /// with text content.
    fn text_list(&mut self, parent: &Element, child: &str, path: &str) -> Result<Vec<String>, WillError> {
        let mut out = Vec::new();
        if parent.empty {
            return Ok(out);
        }
        loop {
            match self.next(path)? {
                Item::End => return Ok(out),
                Item::Foreign { .. } => return Err(violation(path, "foreign element inside a core element")),
                Item::Core(e) if e.name == child => {
                    let p = format!("{path}/{child}[{}]", out.len());
                    e.finish(&p)?;
                    out.push(if e.empty { String::new() } else { self.text_content(&p)? });
                }
                Item::Core(e) => return Err(violation(path, format!("unexpected element {}", e.name))),
            }
        }
    }

    fn document(&mut self) -> Result<DigitalWill, WillError> {
        let mut root = match self.next("/")? {
            Item::Core(e) if e.name == "will" => e,
            Item::Core(e) => return Err(violation("/", format!("root element must be will, found {}", e.name))),
            _ => return Err(violation("/", format!("root element must be will in {NAMESPACE}"))),
        };
        let path = "/will";
        let will_id = root.take(path, "id")?;
        root.finish(path)?;
        let namespaces = self.root_namespaces()?;

        let mut creator = None;
        let mut heirs = None;
        let mut platforms = None;
        let mut policies = None;
        let mut trigger = None;
        let mut storage = None;
        let mut extensions = Vec::new();
        if !root.empty {
            loop {
                let mut e = match self.next(path)? {
                    Item::End => break,
                    Item::Foreign { start, end } => {
                        extensions.push(Extension {
                            xml: self.text[start..end].to_string(),
                        });
                        continue;
                    }
                    Item::Core(e) => e,
                };
                let p = format!("{path}/{}", e.name);
                let seen = match e.name.as_str() {
                    "creator" => {
                        let id = e.take(&p, "id")?;
                        e.finish(&p)?;
                        self.skip_empty(&e, &p)?;
                        creator.replace(id).is_some()
                    }
                    "heirs" => {
                        let v = self.heirs(&e, &p)?;
                        heirs.replace(v).is_some()
                    }
                    "platforms" => {
                        let v = self.platforms(&e, &p)?;
                        platforms.replace(v).is_some()
                    }
                    "policies" => {
                        let v = self.policies(&e, &p)?;
                        policies.replace(v).is_some()
                    }
                    "trigger" => {
                        let v = TriggerConfig {
                            vote_threshold: number(&p, "voteThreshold", &e.take(&p, "voteThreshold")?)?,
                            freeze_seconds: number(&p, "freezeSeconds", &e.take(&p, "freezeSeconds")?)?,
                            authority_override: match e.take(&p, "authorityOverride")?.as_str() {
                                "true" => true,
                                "false" => false,
                                other => return Err(violation(&p, format!("authorityOverride must be true or false, got {other:?}"))),
                            },
                        };
                        e.finish(&p)?;
                        self.skip_empty(&e, &p)?;
                        trigger.replace(v).is_some()
                    }
                    "storage" => {
                        let threshold = number(&p, "threshold", &e.take(&p, "threshold")?)?;
                        e.finish(&p)?;
                        let locations = self.text_list(&e, "location", &p)?;
                        storage.replace(StoragePrefs { locations, threshold }).is_some()
                    }
                    other => return Err(violation(path, format!("unknown element {other}"))),
                };
                if seen {
                    return Err(violation(&p, "element appears more than once"));
                }
            }
        }
        let missing = |what: &str| violation(path, format!("missing element {what}"));
        Ok(DigitalWill {
            will_id,
            creator_id: creator.ok_or_else(|| missing("creator"))?,
            heirs: heirs.ok_or_else(|| missing("heirs"))?,
            platforms: platforms.ok_or_else(|| missing("platforms"))?,
            policies: policies.ok_or_else(|| missing("policies"))?,
            trigger: trigger.ok_or_else(|| missing("trigger"))?,
            storage: storage.ok_or_else(|| missing("storage"))?,
            namespaces,
            extensions,
        })
    }

    /// Prefix declarations on the root other than the core namespace.
    fn root_namespaces(&self) -> Result<BTreeMap<String, String>, WillError> {
        let mut r = NsReader::from_str(self.text);
        loop {
            match r.read_event().map_err(xml_err)? {
                Event::Start(e) | Event::Empty(e) => {
                    let mut out = BTreeMap::new();
                    for a in e.attributes() {
                        let a = a.map_err(xml_err)?;
                        if let Some(quick_xml::name::PrefixDeclaration::Named(prefix)) = a.key.as_namespace_binding() {
                            let uri = a.unescape_value().map_err(xml_err)?.into_owned();
                            if uri != NAMESPACE {
                                out.insert(String::from_utf8_lossy(prefix).into_owned(), uri);
                            }
                        }
                    }
                    return Ok(out);
                }
                Event::Eof => return Ok(BTreeMap::new()),
                _ => {}
            }
        }
    }

    fn skip_empty(&mut self, e: &Element, path: &str) -> Result<(), WillError> {
        if e.empty {
            return Ok(());
        }
        match self.next(path)? {
            Item::End => Ok(()),
            _ => Err(violation(path, "element must be empty")),
        }
    }

    fn heirs(&mut self, parent: &Element, path: &str) -> Result<Vec<Heir>, WillError> {
        let mut out = Vec::new();
        if parent.empty {
            return Ok(out);
        }
        loop {
            let mut e = match self.next(path)? {
                Item::End => return Ok(out),
                Item::Core(e) if e.name == "heir" => e,
                Item::Core(e) => return Err(violation(path, format!("unexpected element {}", e.name))),
                Item::Foreign { .. } => return Err(violation(path, "foreign element inside a core element")),
            };
            let p = format!("{path}/heir[{}]", out.len());
            let id = e.take(&p, "id")?;
            let contact = e.take(&p, "contact")?;
            let public_key = e.take(&p, "publicKey")?;
            e.finish(&p)?;
            let mut attributes = BTreeSet::new();
            for (i, name) in self.text_list(&e, "attribute", &p)?.into_iter().enumerate() {
                let a = AttributeName::new(name).map_err(|source| WillError::Policy {
                    path: format!("{p}/attribute[{i}]"),
                    source,
                })?;
                attributes.insert(a);
            }
            out.push(Heir {
                id,
                contact,
                public_key,
                attributes,
            });
        }
    }

    fn platforms(&mut self, parent: &Element, path: &str) -> Result<Vec<PlatformLink>, WillError> {
        let mut out = Vec::new();
        if parent.empty {
            return Ok(out);
        }
        loop {
            let mut e = match self.next(path)? {
                Item::End => return Ok(out),
                Item::Core(e) if e.name == "platform" => e,
                Item::Core(e) => return Err(violation(path, format!("unexpected element {}", e.name))),
                Item::Foreign { .. } => return Err(violation(path, "foreign element inside a core element")),
            };
            let p = format!("{path}/platform[{}]", out.len());
            let id = e.take(&p, "id")?;
            let token = e.take(&p, "token")?;
            e.finish(&p)?;
            let assets = self.text_list(&e, "asset", &p)?;
            out.push(PlatformLink { id, token, assets });
        }
    }

    fn policies(&mut self, parent: &Element, path: &str) -> Result<Vec<ContentPolicy>, WillError> {
        let mut out = Vec::new();
        if parent.empty {
            return Ok(out);
        }
        loop {
            let mut e = match self.next(path)? {
                Item::End => return Ok(out),
                Item::Core(e) if e.name == "policy" => e,
                Item::Core(e) => return Err(violation(path, format!("unexpected element {}", e.name))),
                Item::Foreign { .. } => return Err(violation(path, "foreign element inside a core element")),
            };
            let p = format!("{path}/policy[{}]", out.len());
            let asset = e.take(&p, "asset")?;
            e.finish(&p)?;
            let text = if e.empty { String::new() } else { self.text_content(&p)? };
            let policy = parse_policy(&text).map_err(|source| WillError::Policy { path: p.clone(), source })?;
            out.push(ContentPolicy { asset, policy });
        }
    }
}

fn is_core(ns: &ResolveResult<'_>) -> bool {
    matches!(ns, ResolveResult::Bound(n) if n.as_ref() == NAMESPACE.as_bytes())
}

fn number<T: std::str::FromStr>(path: &str, key: &str, value: &str) -> Result<T, WillError> {
    value
        .trim()
        .parse()
        .map_err(|_| violation(path, format!("{key} must be a non-negative integer, got {value:?}")))
}
