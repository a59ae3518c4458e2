//! Reader for a small XMI subset.
//!
//! Supported:
//! - a single root element, or an `xmi:XMI` wrapper holding several roots;
//! - containment children, which become references named after the child tag;
//! - XML attributes as attribute values, or as references when every
//!   whitespace-separated token resolves to an element of the document
//!   (`xmi:id`, `#id`, `//@feature.i` and `//Name` fragments, or synthesized
//!   containment paths);
//! - simple-content child elements (`<name>x</name>`) as attribute values;
//! - same-document `href` proxies.
//!
//! Class names come from `xsi:type`/`xmi:type`, the root tag, or a fixed table
//! of Ecore containment features. Elements without an `xmi:id` get the
//! containment path as id, e.g. `/0/@region.0/@subvertex.2`. References to
//! other documents are rejected as unsupported.

use std::collections::HashMap;

use indexmap::IndexMap;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{validate_model, Model, ModelError, ModelObject};

#[derive(Debug, Default)]
struct Element {
    tag: String,
    attrs: Vec<(String, String)>,
    children: Vec<Element>,
    text: String,
}

fn local(name: &str) -> &str {
    name.rsplit_once(':').map_or(name, |(_, l)| l)
}

fn prefix(name: &str) -> Option<&str> {
    name.split_once(':').map(|(p, _)| p)
}

fn is_reserved_attr(key: &str) -> bool {
    key.starts_with("xmlns")
        || key.starts_with("xmi:")
        || key.starts_with("xsi:")
        || key == "href"
}

/// Classes of untyped containment children in Ecore documents.
fn ecore_default_class(feature: &str) -> Option<&'static str> {
    Some(match feature {
        "eClassifiers" => "EClass",
        "eSubpackages" => "EPackage",
        "eLiterals" => "EEnumLiteral",
        "eOperations" => "EOperation",
        "eParameters" => "EParameter",
        "eAnnotations" => "EAnnotation",
        "details" => "EStringToStringMapEntry",
        "eGenericType" | "eGenericSuperTypes" | "eTypeArguments" => "EGenericType",
        "eTypeParameters" => "ETypeParameter",
        _ => return None,
    })
}

fn xml_err(reader: &Reader<&[u8]>, e: impl std::fmt::Display) -> ModelError {
    ModelError::Xml {
        offset: reader.buffer_position() as usize,
        message: e.to_string(),
    }
}

fn start_element(reader: &Reader<&[u8]>, e: &BytesStart<'_>) -> Result<Element, ModelError> {
    let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
    let mut attrs = Vec::new();
    for a in e.attributes() {
        let a = a.map_err(|err| xml_err(reader, err))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a
            .unescape_value()
            .map_err(|err| xml_err(reader, err))?
            .into_owned();
        attrs.push((key, value));
    }
    Ok(Element {
        tag,
        attrs,
        ..Default::default()
    })
}

fn read_tree(bytes: &[u8]) -> Result<Element, ModelError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ModelError::Xml {
        offset: e.valid_up_to(),
        message: "input is not UTF-8".to_string(),
    })?;
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    loop {
        let event = reader.read_event().map_err(|e| xml_err(&reader, e))?;
        match event {
            Event::Start(e) => {
                let el = start_element(&reader, &e)?;
                stack.push(el);
            }
            Event::Empty(e) => {
                let el = start_element(&reader, &e)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None if root.is_none() => root = Some(el),
                    None => return Err(xml_err(&reader, "more than one root element")),
                }
            }
            Event::End(_) => {
                let el = stack
                    .pop()
                    .ok_or_else(|| xml_err(&reader, "unbalanced end tag"))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None if root.is_none() => root = Some(el),
                    None => return Err(xml_err(&reader, "more than one root element")),
                }
            }
            Event::Text(t) => {
                if let Some(top) = stack.last_mut() {
                    let s = t.unescape().map_err(|e| xml_err(&reader, e))?;
                    top.text.push_str(&s);
                }
            }
            Event::CData(t) => {
                if let Some(top) = stack.last_mut() {
                    top.text.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(xml_err(&reader, "unexpected end of document"));
    }
    root.ok_or_else(|| xml_err(&reader, "document has no root element"))
}

/// A child element holding only text is an attribute value, not an object.
fn is_simple_content(el: &Element) -> bool {
    el.attrs.is_empty() && el.children.is_empty() && !el.text.is_empty()
}

fn href(el: &Element) -> Option<&str> {
    el.attrs
        .iter()
        .find(|(k, _)| k == "href")
        .map(|(_, v)| v.as_str())
}

/// Flattened element with everything needed to build its object.
struct Node<'a> {
    el: &'a Element,
    id: String,
    class: String,
    parent: Option<usize>,
    feature: Option<String>,
}

struct Flattener<'a> {
    nodes: Vec<Node<'a>>,
    /// resolvable reference token -> node index
    lookup: HashMap<String, usize>,
}

impl<'a> Flattener<'a> {
    fn add(
        &mut self,
        el: &'a Element,
        path: String,
        parent: Option<usize>,
        feature: Option<String>,
        name_path: Option<String>,
    ) -> Result<(), ModelError> {
        let explicit_type = el
            .attrs
            .iter()
            .find(|(k, _)| k == "xsi:type" || k == "xmi:type")
            .map(|(_, v)| local(v).to_string());
        let class = match (explicit_type, &feature) {
            (Some(t), _) => t,
            (None, None) => local(&el.tag).to_string(),
            (None, Some(f)) => ecore_default_class(f)
                .map(str::to_string)
                .ok_or_else(|| {
                    ModelError::Unsupported(format!(
                        "cannot determine the class of untyped element <{}> at {path}",
                        el.tag
                    ))
                })?,
        };
        let id = el
            .attrs
            .iter()
            .find(|(k, _)| k == "xmi:id")
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| path.clone());

        let idx = self.nodes.len();
        self.lookup.insert(id.clone(), idx);
        self.lookup.insert(path.clone(), idx);
        if let Some(np) = &name_path {
            self.lookup.entry(np.clone()).or_insert(idx);
        }
        self.nodes.push(Node {
            el,
            id,
            class,
            parent,
            feature,
        });

        let mut per_feature: HashMap<&str, usize> = HashMap::new();
        for child in &el.children {
            if is_simple_content(child) || href(child).is_some() {
                continue;
            }
            let feat = local(&child.tag);
            let pos = per_feature.entry(feat).or_insert(0);
            let child_path = format!("{path}/@{feat}.{pos}");
            *pos += 1;
            let child_name_path = match (&name_path, attr(child, "name")) {
                (Some(np), Some(n)) => Some(format!("{np}/{n}")),
                _ => None,
            };
            self.add(child, child_path, Some(idx), Some(feat.to_string()), child_name_path)?;
        }
        Ok(())
    }

    /// Resolve one reference token to an element, if it names one.
    fn resolve(&self, token: &str) -> Result<Option<usize>, ModelError> {
        if let Some(&i) = self.lookup.get(token) {
            return Ok(Some(i));
        }
        let Some((doc, frag)) = token.split_once('#') else {
            // `//@feature.i` fragments are relative to the first root
            if let Some(rest) = token.strip_prefix("//@") {
                return Ok(self.lookup.get(&format!("/0/@{rest}")).copied());
            }
            return Ok(None);
        };
        if !doc.is_empty() {
            return Ok(None);
        }
        if let Some(&i) = self.lookup.get(frag) {
            return Ok(Some(i));
        }
        if let Some(rest) = frag.strip_prefix("//@") {
            return Ok(self.lookup.get(&format!("/0/@{rest}")).copied());
        }
        Ok(None)
    }
}

fn attr<'e>(el: &'e Element, key: &str) -> Option<&'e str> {
    el.attrs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}

fn is_cross_document(uri: &str) -> bool {
    match uri.split_once('#') {
        Some((doc, _)) => !doc.is_empty(),
        None => true,
    }
}

/// Parse a model from the supported XMI subset. The model type is the
/// namespace prefix of the first root element (`ecore:EPackage` gives
/// `ecore`), or `xmi` when the root is unprefixed.
pub fn parse_model_xmi(bytes: &[u8]) -> Result<Model, ModelError> {
    let doc = read_tree(bytes)?;
    let roots: Vec<&Element> = if local(&doc.tag) == "XMI" && prefix(&doc.tag).is_some() {
        doc.children.iter().collect()
    } else {
        vec![&doc]
    };
    let model_type = roots
        .first()
        .and_then(|r| prefix(&r.tag))
        .unwrap_or("xmi")
        .to_string();

    let mut flat = Flattener {
        nodes: Vec::new(),
        lookup: HashMap::new(),
    };
    for (i, root) in roots.iter().enumerate() {
        // `//Name` fragments address elements of the first root by name
        let name_path = (i == 0).then(|| "/".to_string());
        flat.add(root, format!("/{i}"), None, None, name_path)?;
    }

    let mut objects: Vec<ModelObject> = flat
        .nodes
        .iter()
        .map(|n| ModelObject {
            id: n.id.clone(),
            class_name: n.class.clone(),
            attributes: IndexMap::new(),
            references: IndexMap::new(),
        })
        .collect();

    for (idx, node) in flat.nodes.iter().enumerate() {
        let el = node.el;
        for (key, value) in &el.attrs {
            if is_reserved_attr(key) {
                continue;
            }
            let tokens: Vec<&str> = value.split_whitespace().collect();
            let mut targets = Vec::with_capacity(tokens.len());
            for t in &tokens {
                match flat.resolve(t)? {
                    Some(i) => targets.push(flat.nodes[i].id.clone()),
                    None => break,
                }
            }
            let obj = &mut objects[idx];
            if !tokens.is_empty() && targets.len() == tokens.len() {
                obj.references.entry(key.clone()).or_default().extend(targets);
            } else {
                obj.attributes.entry(key.clone()).or_default().push(value.clone());
            }
        }
        for child in &el.children {
            let feat = local(&child.tag).to_string();
            if let Some(uri) = href(child) {
                if is_cross_document(uri) {
                    return Err(ModelError::Unsupported(format!(
                        "cross-document reference '{uri}' in <{}> of '{}'",
                        child.tag, node.id
                    )));
                }
                let target = flat.resolve(uri)?.ok_or_else(|| {
                    ModelError::Unsupported(format!("unresolvable href '{uri}' in '{}'", node.id))
                })?;
                let tid = flat.nodes[target].id.clone();
                objects[idx].references.entry(feat).or_default().push(tid);
            } else if is_simple_content(child) {
                objects[idx]
                    .attributes
                    .entry(feat)
                    .or_default()
                    .push(child.text.clone());
            }
        }
    }

    // containment references, in document order
    for node in &flat.nodes {
        if let (Some(p), Some(f)) = (node.parent, &node.feature) {
            objects[p]
                .references
                .entry(f.clone())
                .or_default()
                .push(node.id.clone());
        }
    }

    let model = Model {
        model_type,
        objects,
        source_uri: String::new(),
    };
    let report = validate_model(&model);
    if !report.is_valid() {
        return Err(ModelError::Invalid(report));
    }
    Ok(model)
}
