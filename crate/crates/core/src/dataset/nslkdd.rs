//! Layout of the headerless NSL-KDD files (`KDDTrain+.txt`, `KDDTest+.txt`).

use std::collections::BTreeMap;

use super::table::LoadOptions;

pub const NSL_KDD_FEATURES: [&str; 41] = [
    "duration",
    "protocol_type",
    "service",
    "flag",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

pub const NSL_KDD_LABEL: &str = "label";
pub const NSL_KDD_DIFFICULTY: &str = "difficulty";
pub const NSL_KDD_BENIGN: &str = "normal";

const CATEGORIES: [(&str, &[&str]); 4] = [
    (
        "DoS",
        &[
            "apache2",
            "back",
            "land",
            "mailbomb",
            "neptune",
            "pod",
            "processtable",
            "smurf",
            "teardrop",
            "udpstorm",
            "worm",
        ],
    ),
    (
        "Probe",
        &["ipsweep", "mscan", "nmap", "portsweep", "saint", "satan"],
    ),
    (
        "R2L",
        &[
            "ftp_write",
            "guess_passwd",
            "httptunnel",
            "imap",
            "multihop",
            "named",
            "phf",
            "sendmail",
            "snmpgetattack",
            "snmpguess",
            "spy",
            "warezclient",
            "warezmaster",
            "xlock",
            "xsnoop",
        ],
    ),
    (
        "U2R",
        &[
            "buffer_overflow",
            "loadmodule",
            "perl",
            "ps",
            "rootkit",
            "sqlattack",
            "xterm",
        ],
    ),
];

/// Column names for the 43-field rows: features, label, difficulty.
pub fn nsl_kdd_columns() -> Vec<String> {
    NSL_KDD_FEATURES
        .iter()
        .copied()
        .chain([NSL_KDD_LABEL, NSL_KDD_DIFFICULTY])
        .map(str::to_owned)
        .collect()
}

pub fn nsl_kdd_load_options() -> LoadOptions {
    LoadOptions {
        label_column: Some(NSL_KDD_LABEL.into()),
        categorical: vec!["protocol_type".into(), "service".into(), "flag".into()],
        ignore: vec![NSL_KDD_DIFFICULTY.into()],
        column_names: Some(nsl_kdd_columns()),
    }
}

/// Attack name → category (DoS, Probe, R2L, U2R).
pub fn nsl_kdd_class_map() -> BTreeMap<String, String> {
    CATEGORIES
        .iter()
        .flat_map(|(cat, names)| names.iter().map(move |n| (n.to_string(), cat.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        assert_eq!(nsl_kdd_columns().len(), 43);
        let m = nsl_kdd_class_map();
        assert_eq!(m["neptune"], "DoS");
        assert_eq!(m["rootkit"], "U2R");
        assert!(!m.contains_key(NSL_KDD_BENIGN));
    }
}
