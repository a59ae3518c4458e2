//! Deterministic synthetic corpora: the phone-call state machines, small
//! random object graphs for oracle tests, and Ecore-flavored meta-models
//! drawn from per-domain vocabularies.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::LabeledCorpus;
use crate::model::{Model, ModelObject};

pub const STATE_MACHINE_TYPE: &str = "statemachine";
pub const ECORE_TYPE: &str = "ecore";

pub const ECORE_PACKAGE: &str = "EPackage";
pub const ECORE_CLASS: &str = "EClass";
pub const ECORE_ATTRIBUTE: &str = "EAttribute";
pub const ECORE_REFERENCE: &str = "EReference";
pub const ECORE_ENUM: &str = "EEnum";
pub const ECORE_LITERAL: &str = "EEnumLiteral";

// ---- state machines ----

/// A transition of [`state_machine`]: (name, source state, target state).
/// Source `None` means the initial pseudo state.
pub type TransitionSpec<'a> = (&'a str, Option<&'a str>, &'a str);

/// UML-like state machine with one region, an initial pseudo state, the
/// given states and transitions. Transitions point to their source, target
/// and containing region; states point to their region.
pub fn state_machine(name: &str, states: &[&str], transitions: &[TransitionSpec<'_>]) -> Model {
    let mut m = Model::new(STATE_MACHINE_TYPE);
    let sm = ModelObject::new("sm", "StateMachine")
        .with_attr("name", name)
        .with_ref("region", "r");
    let mut region = ModelObject::new("r", "Region").with_ref("subvertex", "init");
    for i in 0..states.len() {
        region = region.with_ref("subvertex", format!("s{i}"));
    }
    for i in 0..transitions.len() {
        region = region.with_ref("transition", format!("t{i}"));
    }
    m.objects.push(sm);
    m.objects.push(region);
    m.objects.push(
        ModelObject::new("init", "PseudoState")
            .with_attr("kind", "initial")
            .with_ref("container", "r"),
    );
    for (i, s) in states.iter().enumerate() {
        m.objects.push(
            ModelObject::new(format!("s{i}"), "State")
                .with_attr("name", *s)
                .with_ref("container", "r"),
        );
    }
    let state_id = |s: Option<&str>| match s {
        None => "init".to_string(),
        Some(s) => {
            let i = states
                .iter()
                .position(|x| *x == s)
                .unwrap_or_else(|| panic!("unknown state {s}"));
            format!("s{i}")
        }
    };
    for (i, (tname, src, dst)) in transitions.iter().enumerate() {
        let mut t = ModelObject::new(format!("t{i}"), "Transition");
        if !tname.is_empty() {
            t = t.with_attr("name", *tname);
        }
        m.objects.push(
            t.with_attr("kind", "external")
                .with_ref("source", state_id(*src))
                .with_ref("target", state_id(Some(dst)))
                .with_ref("container", "r"),
        );
    }
    m
}

/// Phone-call state machine used as the indexed model of the running example:
/// makes and receives calls, going straight to `Talking` on an answered call.
pub fn phone_call_model() -> Model {
    state_machine(
        "Phone call",
        &["Idle", "Dialing", "Waiting", "Talking"],
        &[
            ("", None, "Idle"),
            ("dial", Some("Idle"), "Dialing"),
            ("connect", Some("Dialing"), "Talking"),
            ("incoming call", Some("Idle"), "Waiting"),
            ("answer call", Some("Waiting"), "Talking"),
            ("hang up", Some("Talking"), "Idle"),
        ],
    )
    .with_source_uri("fixture://phone-call")
}

/// Query of the running example: only receives calls, waiting in `Wait`
/// before moving to `Waiting to pick up`.
pub fn phone_call_query() -> Model {
    state_machine(
        "Receive call",
        &["Wait", "Waiting to pick up", "Talking"],
        &[
            ("", None, "Wait"),
            ("incoming call", Some("Wait"), "Waiting to pick up"),
            ("answer call", Some("Waiting to pick up"), "Talking"),
            ("hang up", Some("Talking"), "Wait"),
        ],
    )
    .with_source_uri("fixture://receive-call")
}

const DISTRACTORS: &[(&str, &[&str], &[(&str, usize, usize)])] = &[
    ("Traffic light", &["Red", "Green", "Yellow"], &[("go", 0, 1), ("slow", 1, 2), ("stop", 2, 0)]),
    ("Door", &["Open", "Closed", "Locked"], &[("close", 0, 1), ("lock", 1, 2), ("unlock", 2, 1), ("open", 1, 0)]),
    ("Vending machine", &["Ready", "Paid", "Dispensing"], &[("insert coin", 0, 1), ("select item", 1, 2), ("deliver", 2, 0)]),
    ("Elevator", &["Stopped", "Moving up", "Moving down"], &[("call up", 0, 1), ("call down", 0, 2), ("arrive", 1, 0), ("arrive", 2, 0)]),
    ("Turnstile", &["Locked", "Unlocked"], &[("coin", 0, 1), ("push", 1, 0)]),
    ("Washing machine", &["Filling", "Washing", "Rinsing", "Spinning"], &[("full", 0, 1), ("washed", 1, 2), ("rinsed", 2, 3), ("done", 3, 0)]),
    ("Order", &["Created", "Paid", "Shipped", "Delivered"], &[("pay", 0, 1), ("ship", 1, 2), ("deliver", 2, 3)]),
    ("Media player", &["Stopped", "Playing", "Paused"], &[("play", 0, 1), ("pause", 1, 2), ("resume", 2, 1), ("stop", 1, 0)]),
    ("Login", &["Anonymous", "Authenticating", "Logged in"], &[("submit", 0, 1), ("accept", 1, 2), ("reject", 1, 0), ("logout", 2, 0)]),
    ("Thermostat", &["Idle", "Heating", "Cooling"], &[("too cold", 0, 1), ("too hot", 0, 2), ("reached", 1, 0), ("reached", 2, 0)]),
    ("Printer", &["Idle", "Printing", "Out of paper"], &[("print", 0, 1), ("finish", 1, 0), ("paper empty", 1, 2), ("refill", 2, 1)]),
    ("Alarm clock", &["Off", "Armed", "Ringing"], &[("set", 0, 1), ("time reached", 1, 2), ("snooze", 2, 1), ("dismiss", 2, 0)]),
    ("Microwave", &["Idle", "Cooking", "Door open"], &[("start", 0, 1), ("timer done", 1, 0), ("open door", 0, 2), ("close door", 2, 0)]),
    ("Parking gate", &["Down", "Raising", "Up"], &[("ticket", 0, 1), ("raised", 1, 2), ("car passed", 2, 0)]),
    ("Game", &["Menu", "Playing", "Game over"], &[("start", 0, 1), ("die", 1, 2), ("retry", 2, 1), ("quit", 2, 0)]),
    ("Download", &["Queued", "Downloading", "Completed", "Failed"], &[("begin", 0, 1), ("finish", 1, 2), ("error", 1, 3), ("retry", 3, 0)]),
    ("Coffee maker", &["Off", "Heating", "Brewing"], &[("power on", 0, 1), ("hot", 1, 2), ("brewed", 2, 0)]),
    ("Ticket", &["Open", "In progress", "Resolved", "Closed"], &[("assign", 0, 1), ("resolve", 1, 2), ("close", 2, 3), ("reopen", 2, 0)]),
    ("Battery", &["Charging", "Full", "Discharging"], &[("charged", 0, 1), ("unplug", 1, 2), ("plug", 2, 0)]),
    ("Answering machine", &["Standby", "Greeting", "Recording"], &[("ring", 0, 1), ("beep", 1, 2), ("hang up", 2, 0)]),
];

/// Twenty state machines from unrelated domains. All share the initial
/// pseudo state, so `(initial, kind, PseudoState)` is in every one of them.
pub fn state_machine_distractors() -> Vec<(String, Model)> {
    DISTRACTORS
        .iter()
        .map(|(name, states, transitions)| {
            let mut ts: Vec<TransitionSpec<'_>> = vec![("", None, states[0])];
            ts.extend(transitions.iter().map(|(t, s, d)| (*t, Some(states[*s]), states[*d])));
            let id = format!("sm-{}", name.to_lowercase().replace(' ', "-"));
            let m = state_machine(name, states, &ts).with_source_uri(format!("fixture://{id}"));
            (id, m)
        })
        .collect()
}

// ---- small random object graphs ----

const RANDOM_CLASSES: &[&str] = &["Node", "Edge", "Port", "Block", "Signal", "Group"];
const RANDOM_ATTRS: &[&str] = &["name", "kind", "label"];
const RANDOM_REFS: &[&str] = &["next", "owner", "parts", "target"];
const RANDOM_WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "input", "output", "main", "buffer", "clock", "reset",
    "fast lane", "slow path", "red", "green", "the", "of", "Running", "connected", "setValue",
    "HTTPServer",
];

/// Random object graph with up to `max_objects` objects drawn from a small
/// shared vocabulary, so corpora built from it have overlapping paths.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, max_objects: usize) -> Model {
    let n = rng.random_range(1..=max_objects.max(1));
    let mut m = Model::new("random");
    for i in 0..n {
        let mut o = ModelObject::new(format!("o{i}"), *RANDOM_CLASSES.choose(rng).expect("non-empty"));
        for a in RANDOM_ATTRS {
            // roughly one attribute-less object in four
            if rng.random_bool(0.4) {
                let values = rng.random_range(1..=2);
                for _ in 0..values {
                    o = o.with_attr(a, *RANDOM_WORDS.choose(rng).expect("non-empty"));
                }
            }
        }
        m.objects.push(o);
    }
    for i in 0..n {
        let refs = rng.random_range(0..=2);
        for _ in 0..refs {
            let r = *RANDOM_REFS.choose(rng).expect("non-empty");
            let t = rng.random_range(0..n);
            let target = format!("o{t}");
            let o = &mut m.objects[i];
            let list = o.references.entry(r.to_string()).or_default();
            if !list.contains(&target) {
                list.push(target);
            }
        }
    }
    m
}

/// `n` random models with ids `rand-000`, `rand-001`, ...
pub fn random_corpus(seed: u64, n: usize, max_objects: usize) -> Vec<(String, Model)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| (format!("rand-{i:03}"), random_model(&mut rng, max_objects)))
        .collect()
}

// ---- Ecore-flavored meta-models ----

/// Vocabulary of one application domain.
#[derive(Debug)]
pub struct Domain {
    pub name: &'static str,
    pub nouns: &'static [&'static str],
    pub modifiers: &'static [&'static str],
    pub features: &'static [&'static str],
    pub enums: &'static [&'static str],
    pub literals: &'static [&'static str],
}

const GENERIC_NOUNS: &[&str] = &[
    "Element", "NamedElement", "Entity", "Container", "Item", "Node", "Group", "Model",
];
const GENERIC_FEATURES: &[&str] = &[
    "name", "id", "description", "value", "type", "kind", "children", "parent", "owner",
    "elements", "items", "label",
];
const DATA_TYPES: &[&str] = &["EString", "EInt", "EBoolean", "EDouble", "EDate"];

pub static DOMAINS: &[Domain] = &[
    Domain {
        name: "library",
        nouns: &["Library", "Book", "Author", "Member", "Loan", "Shelf", "Catalog", "Publisher", "Edition", "Copy", "Reservation", "Fine", "Genre", "Librarian", "Branch", "Journal", "Chapter", "Review"],
        modifiers: &["Rare", "Digital", "Printed", "Reference", "Overdue", "Public"],
        features: &["title", "isbn", "pages", "borrower", "dueDate", "writtenBy", "published", "shelfNumber", "copies", "fineAmount", "reservedBy", "genre", "lends", "chapters"],
        enums: &["LoanStatus", "Format", "MembershipLevel"],
        literals: &["active", "returned", "lost", "paperback", "hardcover", "ebook", "basic", "premium"],
    },
    Domain {
        name: "statecharts",
        nouns: &["StateMachine", "State", "Transition", "Region", "Event", "Guard", "Action", "Trigger", "Vertex", "PseudoState", "FinalState", "Activity", "Behavior", "Signal", "Timer", "History"],
        modifiers: &["Composite", "Simple", "Initial", "Concurrent", "Deferred", "Internal"],
        features: &["source", "target", "outgoing", "incoming", "entry", "exit", "effect", "guard", "trigger", "subvertex", "regions", "isFinal", "timeout", "doActivity"],
        enums: &["TransitionKind", "PseudoStateKind", "EventKind"],
        literals: &["external", "internal", "local", "initial", "choice", "junction", "fork", "join"],
    },
    Domain {
        name: "petrinets",
        nouns: &["PetriNet", "Place", "Arc", "Token", "Marking", "Page", "Inhibitor", "Weight", "Firing", "Capacity", "Label", "Net", "Subnet", "Colour", "Step"],
        modifiers: &["Input", "Output", "Timed", "Coloured", "Reset", "Initial"],
        features: &["tokens", "arcs", "places", "transitions", "weight", "capacity", "fires", "marking", "inputs", "outputs", "enabled", "delay", "pages", "colour"],
        enums: &["ArcKind", "NetType", "FiringPolicy"],
        literals: &["normal", "inhibitor", "reset", "ptnet", "coloured", "timed", "eager", "lazy"],
    },
    Domain {
        name: "banking",
        nouns: &["Bank", "Account", "Customer", "Transaction", "Deposit", "Withdrawal", "Loan", "Card", "Branch", "Statement", "Currency", "Teller", "Mortgage", "Payment", "Interest", "Atm"],
        modifiers: &["Savings", "Checking", "Joint", "Corporate", "Foreign", "Pending"],
        features: &["balance", "holder", "amount", "currency", "iban", "accounts", "transactions", "owner", "rate", "issuedBy", "expiry", "limit", "fromAccount", "toAccount"],
        enums: &["AccountType", "CardKind", "TransactionState"],
        literals: &["savings", "checking", "credit", "debit", "pending", "settled", "rejected", "reversed"],
    },
    Domain {
        name: "hospital",
        nouns: &["Hospital", "Patient", "Doctor", "Nurse", "Ward", "Bed", "Appointment", "Prescription", "Diagnosis", "Treatment", "Medication", "Surgery", "Department", "Record", "Allergy", "Visit"],
        modifiers: &["Emergency", "Outpatient", "Chronic", "Senior", "Intensive", "Pediatric"],
        features: &["admitted", "attends", "prescribes", "dosage", "symptoms", "ward", "bed", "treats", "scheduled", "diagnosis", "allergies", "discharged", "medications", "surgeon"],
        enums: &["Severity", "BloodType", "VisitKind"],
        literals: &["mild", "moderate", "severe", "critical", "routine", "urgent", "followup", "checkup"],
    },
    Domain {
        name: "ecommerce",
        nouns: &["Shop", "Product", "Cart", "Order", "Customer", "Invoice", "Shipment", "Discount", "Category", "Warehouse", "Supplier", "Review", "Wishlist", "Coupon", "Stock", "Payment"],
        modifiers: &["Digital", "Bundled", "Seasonal", "Featured", "Returned", "Express"],
        features: &["price", "quantity", "sku", "orderedBy", "contains", "shippedTo", "total", "discount", "rating", "stockLevel", "suppliedBy", "category", "lines", "paidWith"],
        enums: &["OrderStatus", "ShippingMethod", "PaymentMethod"],
        literals: &["placed", "shipped", "delivered", "cancelled", "standard", "express", "card", "transfer"],
    },
    Domain {
        name: "university",
        nouns: &["University", "Student", "Course", "Professor", "Lecture", "Exam", "Grade", "Enrollment", "Faculty", "Semester", "Thesis", "Classroom", "Degree", "Assignment", "Campus", "Seminar"],
        modifiers: &["Graduate", "Elective", "Mandatory", "Visiting", "Online", "Final"],
        features: &["enrolled", "teaches", "credits", "grade", "supervisor", "semester", "room", "attends", "passed", "deadline", "courses", "students", "degree", "advisor"],
        enums: &["GradeLevel", "CourseType", "Term"],
        literals: &["excellent", "good", "pass", "fail", "lecture", "lab", "autumn", "spring"],
    },
    Domain {
        name: "railway",
        nouns: &["Railway", "Train", "Station", "Track", "Signal", "Platform", "Schedule", "Route", "Wagon", "Locomotive", "Switch", "Segment", "Timetable", "Crew", "Depot", "Junction"],
        modifiers: &["Freight", "Passenger", "Express", "Regional", "Electric", "Main"],
        features: &["departs", "arrives", "platform", "tracks", "speedLimit", "length", "wagons", "route", "stops", "signals", "occupied", "driver", "headway", "connects"],
        enums: &["SignalAspect", "TrainCategory", "SwitchPosition"],
        literals: &["proceed", "caution", "halt", "freight", "intercity", "commuter", "straight", "diverging"],
    },
    Domain {
        name: "filesystem",
        nouns: &["FileSystem", "File", "Directory", "Drive", "Link", "Permission", "Volume", "Partition", "Block", "Inode", "Mount", "Snapshot", "Quota", "Archive", "Owner", "Path"],
        modifiers: &["Hidden", "Symbolic", "Compressed", "Encrypted", "Shared", "Temporary"],
        features: &["size", "contents", "files", "directories", "mountedAt", "readable", "writable", "created", "modified", "points", "blocks", "extension", "quota", "parentDir"],
        enums: &["FileKind", "AccessRight", "FsType"],
        literals: &["regular", "socket", "pipe", "read", "write", "execute", "ext4", "ntfs"],
    },
    Domain {
        name: "workflow",
        nouns: &["Workflow", "Task", "Actor", "Gateway", "Flow", "Lane", "Pool", "Artifact", "Milestone", "Process", "Decision", "Deadline", "Role", "Subprocess", "Condition", "Outcome"],
        modifiers: &["Manual", "Automated", "Parallel", "Exclusive", "Optional", "Recurring"],
        features: &["performedBy", "next", "previous", "condition", "assigned", "inputs", "outputs", "duration", "priority", "lanes", "tasks", "flows", "completed", "escalatesTo"],
        enums: &["GatewayKind", "TaskState", "Priority"],
        literals: &["xor", "and", "or", "ready", "running", "completed", "low", "high"],
    },
    Domain {
        name: "network",
        nouns: &["Network", "Host", "Router", "Interface", "Subnet", "Packet", "Protocol", "Firewall", "Rule", "Gateway", "Connection", "Port", "Switch", "Vlan", "Address", "Cable"],
        modifiers: &["Virtual", "Wireless", "Secure", "Public", "Private", "Backup"],
        features: &["address", "mask", "interfaces", "hosts", "routes", "ports", "allowed", "denied", "bandwidth", "latency", "connectedTo", "protocol", "vlan", "hops"],
        enums: &["ProtocolKind", "RuleAction", "LinkSpeed"],
        literals: &["tcp", "udp", "icmp", "allow", "deny", "drop", "gigabit", "fast"],
    },
    Domain {
        name: "robotics",
        nouns: &["Robot", "Sensor", "Actuator", "Joint", "Link", "Controller", "Gripper", "Motor", "Camera", "Mission", "Waypoint", "Map", "Obstacle", "Battery", "Arm", "Wheel"],
        modifiers: &["Mobile", "Rotary", "Linear", "Autonomous", "Remote", "Lidar"],
        features: &["pose", "velocity", "torque", "joints", "sensors", "actuators", "reads", "drives", "waypoints", "range", "charge", "mission", "gripper", "mountedOn"],
        enums: &["JointType", "SensorKind", "MissionState"],
        literals: &["revolute", "prismatic", "fixed", "lidar", "sonar", "idle", "navigating", "docked"],
    },
];

/// Size and shape of generated Ecore-flavored models.
#[derive(Debug, Clone)]
pub struct EcoreShape {
    /// number of EClass objects, drawn uniformly
    pub classes: (usize, usize),
    pub attrs_per_class: (usize, usize),
    pub refs_per_class: (usize, usize),
    pub enums: (usize, usize),
    pub inheritance_rate: f64,
    /// chance that a class or feature name comes from the generic pool
    pub generic_rate: f64,
}

impl Default for EcoreShape {
    fn default() -> Self {
        EcoreShape {
            classes: (20, 40),
            attrs_per_class: (1, 3),
            refs_per_class: (1, 2),
            enums: (1, 3),
            inheritance_rate: 0.25,
            generic_rate: 0.1,
        }
    }
}

struct NamePool<'a> {
    used: BTreeSet<String>,
    domain: &'a Domain,
}

impl NamePool<'_> {
    fn class_name<R: Rng + ?Sized>(&mut self, rng: &mut R, generic_rate: f64) -> String {
        for attempt in 0.. {
            let noun = if rng.random_bool(generic_rate) {
                *GENERIC_NOUNS.choose(rng).expect("non-empty")
            } else {
                *self.domain.nouns.choose(rng).expect("non-empty")
            };
            let name = if attempt < 3 {
                noun.to_string()
            } else {
                let m = self.domain.modifiers.choose(rng).expect("non-empty");
                format!("{m}{noun}")
            };
            if attempt > 40 {
                let name = format!("{name}{attempt}");
                self.used.insert(name.clone());
                return name;
            }
            if self.used.insert(name.clone()) {
                return name;
            }
        }
        unreachable!()
    }
}

fn feature_name<R: Rng + ?Sized>(rng: &mut R, domain: &Domain, generic_rate: f64, taken: &mut BTreeSet<String>) -> String {
    for _ in 0..20 {
        let f = if rng.random_bool(generic_rate) {
            *GENERIC_FEATURES.choose(rng).expect("non-empty")
        } else {
            *domain.features.choose(rng).expect("non-empty")
        };
        if taken.insert(f.to_string()) {
            return f.to_string();
        }
    }
    let f = format!("{}{}", domain.features.choose(rng).expect("non-empty"), taken.len());
    taken.insert(f.clone());
    f
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi.max(lo))
}

/// One Ecore-flavored meta-model from `domain`: a root package whose
/// classifiers are classes and enums. Classes own attributes and references;
/// references point to classes, inheritance links never form cycles.
pub fn ecore_model<R: Rng + ?Sized>(rng: &mut R, domain: &Domain, shape: &EcoreShape, package: &str) -> Model {
    let mut m = Model::new(ECORE_TYPE);
    let n_classes = draw(rng, shape.classes).max(1);
    let mut pool = NamePool {
        used: BTreeSet::new(),
        domain,
    };
    let class_names: Vec<String> = (0..n_classes)
        .map(|_| pool.class_name(rng, shape.generic_rate))
        .collect();

    let mut pkg = ModelObject::new("pkg", ECORE_PACKAGE)
        .with_attr("name", package)
        .with_attr("nsURI", format!("http://example.org/{package}"));
    let mut objects = Vec::new();

    for (ci, cname) in class_names.iter().enumerate() {
        let cid = format!("c{ci}");
        pkg = pkg.with_ref("eClassifiers", cid.clone());
        let mut class = ModelObject::new(cid.clone(), ECORE_CLASS).with_attr("name", cname.clone());
        if rng.random_bool(0.1) {
            class = class.with_attr("abstract", "true");
        }
        let mut taken = BTreeSet::new();
        for ai in 0..draw(rng, shape.attrs_per_class) {
            let fid = format!("{cid}a{ai}");
            class = class.with_ref("eStructuralFeatures", fid.clone());
            objects.push(
                ModelObject::new(fid, ECORE_ATTRIBUTE)
                    .with_attr("name", feature_name(rng, domain, shape.generic_rate, &mut taken))
                    .with_attr("eType", *DATA_TYPES.choose(rng).expect("non-empty")),
            );
        }
        for ri in 0..draw(rng, shape.refs_per_class) {
            let fid = format!("{cid}r{ri}");
            class = class.with_ref("eStructuralFeatures", fid.clone());
            let target = rng.random_range(0..n_classes);
            let mut r = ModelObject::new(fid, ECORE_REFERENCE)
                .with_attr("name", feature_name(rng, domain, shape.generic_rate, &mut taken))
                .with_ref("eType", format!("c{target}"));
            if rng.random_bool(0.3) {
                r = r.with_attr("containment", "true");
            }
            objects.push(r);
        }
        // supertypes only point backwards, so the hierarchy is acyclic
        if ci > 0 && rng.random_bool(shape.inheritance_rate) {
            let sup = rng.random_range(0..ci);
            class = class.with_ref("eSuperTypes", format!("c{sup}"));
        }
        objects.insert(objects.len() - count_features(&class), class);
    }

    let n_enums = draw(rng, shape.enums);
    let mut enum_names: Vec<&str> = domain.enums.to_vec();
    enum_names.shuffle(rng);
    for (ei, ename) in enum_names.iter().take(n_enums).enumerate() {
        let eid = format!("e{ei}");
        pkg = pkg.with_ref("eClassifiers", eid.clone());
        let mut en = ModelObject::new(eid.clone(), ECORE_ENUM).with_attr("name", *ename);
        let mut lits: Vec<&str> = domain.literals.to_vec();
        lits.shuffle(rng);
        let n_lits = rng.random_range(2..=4);
        let mut lit_objects = Vec::new();
        for (li, lname) in lits.iter().take(n_lits).enumerate() {
            let lid = format!("{eid}l{li}");
            en = en.with_ref("eLiterals", lid.clone());
            lit_objects.push(ModelObject::new(lid, ECORE_LITERAL).with_attr("name", *lname));
        }
        objects.push(en);
        objects.extend(lit_objects);
    }

    m.objects.push(pkg);
    m.objects.extend(objects);
    m
}

fn count_features(class: &ModelObject) -> usize {
    class
        .references
        .get("eStructuralFeatures")
        .map_or(0, Vec::len)
}

/// Number of EClass objects in `m`.
pub fn class_count(m: &Model) -> usize {
    m.count_class(ECORE_CLASS)
}

/// `n` Ecore-flavored models spread round-robin over all domains, so each
/// domain's vocabulary is shared by many models. Ids are `ecore-0000`, ...
pub fn ecore_corpus(seed: u64, n: usize, shape: &EcoreShape) -> Vec<(String, Model)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let domain = &DOMAINS[i % DOMAINS.len()];
            let id = format!("ecore-{i:04}");
            let package = format!("{}{}", domain.name, i / DOMAINS.len());
            let m = ecore_model(&mut rng, domain, shape, &package).with_source_uri(format!("synth://{id}"));
            (id, m)
        })
        .collect()
}

/// Labeled corpus over the first three domains, whose vocabularies are
/// disjoint apart from the generic pool. Labels are domain names.
pub fn labeled_corpus(seed: u64, per_domain: usize) -> (Vec<(String, Model)>, LabeledCorpus) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = EcoreShape {
        classes: (6, 18),
        ..EcoreShape::default()
    };
    let mut models = Vec::new();
    let mut labels = LabeledCorpus::default();
    for i in 0..per_domain {
        for domain in [&DOMAINS[0], &DOMAINS[3], &DOMAINS[4]] {
            let id = format!("{}-{i:03}", domain.name);
            let m = ecore_model(&mut rng, domain, &shape, &format!("{}{i}", domain.name));
            labels.labels.insert(id.clone(), domain.name.to_string());
            models.push((id, m));
        }
    }
    (models, labels)
}

/// Ecore-flavored model with exactly `classes` classes; used to build
/// latency queries of a chosen size.
pub fn ecore_query<R: Rng + ?Sized>(rng: &mut R, classes: usize) -> Model {
    let domain = DOMAINS.choose(rng).expect("non-empty");
    let shape = EcoreShape {
        classes: (classes, classes),
        attrs_per_class: (1, 2),
        refs_per_class: (1, 1),
        enums: (if classes > 10 { 1 } else { 0 }, 1),
        ..EcoreShape::default()
    };
    ecore_model(rng, domain, &shape, "query")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;

    #[test]
    fn state_machines_are_valid() {
        assert!(validate_model(&phone_call_model()).is_valid());
        assert!(validate_model(&phone_call_query()).is_valid());
        let d = state_machine_distractors();
        assert_eq!(d.len(), 20);
        for (_, m) in &d {
            assert!(validate_model(m).is_valid());
        }
    }

    #[test]
    fn ecore_corpus_is_deterministic_and_valid() {
        let a = ecore_corpus(7, 24, &EcoreShape::default());
        let b = ecore_corpus(7, 24, &EcoreShape::default());
        assert_eq!(a, b);
        for (_, m) in &a {
            assert!(validate_model(m).is_valid(), "{:?}", validate_model(m));
            let c = class_count(m);
            assert!((20..=40).contains(&c));
        }
        assert_ne!(a, ecore_corpus(8, 24, &EcoreShape::default()));
    }

    #[test]
    fn class_names_are_unique_within_a_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = EcoreShape {
            classes: (90, 90),
            ..EcoreShape::default()
        };
        let m = ecore_model(&mut rng, &DOMAINS[0], &shape, "p");
        let names: BTreeSet<_> = m
            .objects
            .iter()
            .filter(|o| o.class_name == ECORE_CLASS)
            .filter_map(|o| o.name())
            .collect();
        assert_eq!(names.len(), 90);
    }

    #[test]
    fn labeled_corpus_is_balanced() {
        let (models, labels) = labeled_corpus(1, 5);
        assert_eq!(models.len(), 15);
        assert_eq!(labels.label_set().len(), 3);
    }

    #[test]
    fn random_models_are_valid() {
        for (_, m) in random_corpus(11, 30, 12) {
            assert!(validate_model(&m).is_valid());
        }
    }
}
