//! SQLite persistence: patients, observations, cached predictions and
//! derived views, and lab orders.

use std::path::Path;

use rusqlite::{params, Connection, OptionalExtension, Transaction};
use serde::{Deserialize, Serialize};

use sepsislab::data::{Observation, PatientRecord, Sex, StaticInfo, VariableId};
use sepsislab::uncertainty::UncertainPrediction;

use crate::error::ServiceError;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS patients (
    id          TEXT PRIMARY KEY,
    alias       TEXT NOT NULL,
    age         REAL NOT NULL,
    sex         TEXT NOT NULL,
    flags       TEXT NOT NULL,
    now_hours   REAL NOT NULL,
    version     INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS observations (
    patient_id  TEXT NOT NULL REFERENCES patients(id),
    variable    INTEGER NOT NULL,
    time        REAL NOT NULL,
    value       REAL NOT NULL,
    PRIMARY KEY (patient_id, variable, time)
);
CREATE TABLE IF NOT EXISTS predictions (
    patient_id  TEXT PRIMARY KEY REFERENCES patients(id),
    version     INTEGER NOT NULL,
    time        REAL NOT NULL,
    p_mean      REAL NOT NULL,
    p_std       REAL NOT NULL,
    entropy     REAL NOT NULL,
    band_low    REAL NOT NULL,
    band_high   REAL NOT NULL,
    n_samples   INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS derived (
    patient_id  TEXT NOT NULL REFERENCES patients(id),
    key         TEXT NOT NULL,
    version     INTEGER NOT NULL,
    body        TEXT NOT NULL,
    PRIMARY KEY (patient_id, key)
);
CREATE TABLE IF NOT EXISTS orders (
    id              INTEGER PRIMARY KEY AUTOINCREMENT,
    patient_id      TEXT NOT NULL REFERENCES patients(id),
    variables       TEXT NOT NULL,
    order_time      REAL NOT NULL,
    fulfilled_time  REAL,
    fulfilled_values TEXT
);
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRow {
    pub id: String,
    pub alias: String,
    pub static_info: StaticInfo,
    /// Current hour since admission; predictions are made at this time.
    pub now_hours: f64,
    /// Bumped on every write; cached views carry the version they were
    /// computed for.
    pub version: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedPrediction {
    pub version: i64,
    pub time: f64,
    pub prediction: UncertainPrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub id: i64,
    pub patient_id: String,
    pub variables: Vec<VariableId>,
    pub order_time: f64,
    pub fulfilled_time: Option<f64>,
    pub fulfilled_values: Option<Vec<(VariableId, f64)>>,
}

pub struct Store {
    conn: Connection,
}

fn json_err(e: serde_json::Error) -> ServiceError {
    ServiceError::Internal(format!("corrupt store row: {e}"))
}

impl Store {
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| ServiceError::Config(format!("{}: {e}", dir.display())))?;
        }
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        // commits survive a killed process and a power cut
        conn.pragma_update(None, "synchronous", "FULL")?;
        conn.pragma_update(None, "foreign_keys", true)?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn })
    }

    pub fn in_memory() -> Result<Self, ServiceError> {
        let conn = Connection::open_in_memory()?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn })
    }

    pub fn transaction(&mut self) -> Result<Transaction<'_>, ServiceError> {
        Ok(self.conn.transaction()?)
    }

    pub fn count_patients(&self) -> Result<usize, ServiceError> {
        let n: i64 = self.conn.query_row("SELECT COUNT(*) FROM patients", [], |r| r.get(0))?;
        Ok(n as usize)
    }

    pub fn patient_ids(&self) -> Result<Vec<String>, ServiceError> {
        let mut stmt = self.conn.prepare("SELECT id FROM patients ORDER BY id")?;
        let ids = stmt.query_map([], |r| r.get(0))?.collect::<Result<_, _>>()?;
        Ok(ids)
    }

    pub fn patient(&self, id: &str) -> Result<Option<PatientRow>, ServiceError> {
        patient(&self.conn, id)
    }

    pub fn record(&self, row: &PatientRow) -> Result<PatientRecord, ServiceError> {
        record(&self.conn, row)
    }

    pub fn prediction(&self, id: &str) -> Result<Option<CachedPrediction>, ServiceError> {
        let p = self
            .conn
            .query_row(
                "SELECT version, time, p_mean, p_std, entropy, band_low, band_high, n_samples
                 FROM predictions WHERE patient_id = ?1",
                [id],
                |r| {
                    Ok(CachedPrediction {
                        version: r.get(0)?,
                        time: r.get(1)?,
                        prediction: UncertainPrediction {
                            p_mean: r.get(2)?,
                            p_std: r.get(3)?,
                            entropy: r.get(4)?,
                            band: (r.get(5)?, r.get(6)?),
                            n_samples: r.get::<_, i64>(7)? as usize,
                        },
                    })
                },
            )
            .optional()?;
        Ok(p)
    }

    /// Cached body of a derived view, if computed for `version`.
    pub fn derived(&self, id: &str, key: &str, version: i64) -> Result<Option<String>, ServiceError> {
        let body = self
            .conn
            .query_row(
                "SELECT body FROM derived WHERE patient_id = ?1 AND key = ?2 AND version = ?3",
                params![id, key, version],
                |r| r.get(0),
            )
            .optional()?;
        Ok(body)
    }

    pub fn put_derived(&self, id: &str, key: &str, version: i64, body: &str) -> Result<(), ServiceError> {
        self.conn.execute(
            "INSERT INTO derived (patient_id, key, version, body) VALUES (?1, ?2, ?3, ?4)
             ON CONFLICT (patient_id, key) DO UPDATE SET version = excluded.version, body = excluded.body",
            params![id, key, version, body],
        )?;
        Ok(())
    }

    pub fn order(&self, id: i64) -> Result<Option<OrderRow>, ServiceError> {
        order(&self.conn, id)
    }
}

pub fn patient(conn: &Connection, id: &str) -> Result<Option<PatientRow>, ServiceError> {
    let row = conn
        .query_row(
            "SELECT id, alias, age, sex, flags, now_hours, version FROM patients WHERE id = ?1",
            [id],
            |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, f64>(2)?,
                    r.get::<_, String>(3)?,
                    r.get::<_, String>(4)?,
                    r.get::<_, f64>(5)?,
                    r.get::<_, i64>(6)?,
                ))
            },
        )
        .optional()?;
    let Some((id, alias, age, sex, flags, now_hours, version)) = row else {
        return Ok(None);
    };
    let sex = Sex::parse(&sex).ok_or_else(|| ServiceError::Internal(format!("corrupt sex `{sex}`")))?;
    let history_flags = serde_json::from_str(&flags).map_err(json_err)?;
    Ok(Some(PatientRow {
        id,
        alias,
        static_info: StaticInfo { age, sex, history_flags },
        now_hours,
        version,
    }))
}

pub fn record(conn: &Connection, row: &PatientRow) -> Result<PatientRecord, ServiceError> {
    let mut stmt = conn.prepare_cached(
        "SELECT variable, time, value FROM observations WHERE patient_id = ?1 ORDER BY time, variable",
    )?;
    let obs = stmt
        .query_map([&row.id], |r| {
            Ok(Observation {
                variable: r.get::<_, i64>(0)? as VariableId,
                time: r.get(1)?,
                value: r.get(2)?,
            })
        })?
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PatientRecord::new(row.id.clone(), row.static_info.clone(), obs, None)?)
}

pub fn insert_patient(conn: &Connection, row: &PatientRow) -> Result<bool, ServiceError> {
    let flags = serde_json::to_string(&row.static_info.history_flags).map_err(json_err)?;
    let n = conn.execute(
        "INSERT OR IGNORE INTO patients (id, alias, age, sex, flags, now_hours, version)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
        params![
            row.id,
            row.alias,
            row.static_info.age,
            row.static_info.sex.as_str(),
            flags,
            row.now_hours,
            row.version
        ],
    )?;
    Ok(n == 1)
}

/// Last write wins on `(patient, variable, time)`; returns whether an
/// earlier value was replaced.
pub fn upsert_observation(conn: &Connection, id: &str, obs: &Observation) -> Result<bool, ServiceError> {
    let existed: bool = conn.query_row(
        "SELECT EXISTS (SELECT 1 FROM observations WHERE patient_id = ?1 AND variable = ?2 AND time = ?3)",
        params![id, obs.variable as i64, obs.time],
        |r| r.get(0),
    )?;
    conn.execute(
        "INSERT INTO observations (patient_id, variable, time, value) VALUES (?1, ?2, ?3, ?4)
         ON CONFLICT (patient_id, variable, time) DO UPDATE SET value = excluded.value",
        params![id, obs.variable as i64, obs.time, obs.value],
    )?;
    Ok(existed)
}

/// Moves the patient clock and bumps the version; derived views go stale.
pub fn touch_patient(conn: &Connection, id: &str, now_hours: f64) -> Result<i64, ServiceError> {
    let version: i64 = conn.query_row(
        "UPDATE patients SET now_hours = ?2, version = version + 1 WHERE id = ?1 RETURNING version",
        params![id, now_hours],
        |r| r.get(0),
    )?;
    conn.execute("DELETE FROM derived WHERE patient_id = ?1", [id])?;
    Ok(version)
}

pub fn put_prediction(conn: &Connection, id: &str, p: &CachedPrediction) -> Result<(), ServiceError> {
    let u = &p.prediction;
    conn.execute(
        "INSERT INTO predictions (patient_id, version, time, p_mean, p_std, entropy, band_low, band_high, n_samples)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)
         ON CONFLICT (patient_id) DO UPDATE SET version = excluded.version, time = excluded.time,
             p_mean = excluded.p_mean, p_std = excluded.p_std, entropy = excluded.entropy,
             band_low = excluded.band_low, band_high = excluded.band_high, n_samples = excluded.n_samples",
        params![id, p.version, p.time, u.p_mean, u.p_std, u.entropy, u.band.0, u.band.1, u.n_samples as i64],
    )?;
    Ok(())
}

pub fn insert_order(conn: &Connection, id: &str, variables: &[VariableId], time: f64) -> Result<i64, ServiceError> {
    let vars = serde_json::to_string(variables).map_err(json_err)?;
    conn.execute(
        "INSERT INTO orders (patient_id, variables, order_time) VALUES (?1, ?2, ?3)",
        params![id, vars, time],
    )?;
    Ok(conn.last_insert_rowid())
}

pub fn order(conn: &Connection, id: i64) -> Result<Option<OrderRow>, ServiceError> {
    let row = conn
        .query_row(
            "SELECT id, patient_id, variables, order_time, fulfilled_time, fulfilled_values FROM orders WHERE id = ?1",
            [id],
            |r| {
                Ok((
                    r.get::<_, i64>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, f64>(3)?,
                    r.get::<_, Option<f64>>(4)?,
                    r.get::<_, Option<String>>(5)?,
                ))
            },
        )
        .optional()?;
    let Some((id, patient_id, vars, order_time, fulfilled_time, values)) = row else {
        return Ok(None);
    };
    Ok(Some(OrderRow {
        id,
        patient_id,
        variables: serde_json::from_str(&vars).map_err(json_err)?,
        order_time,
        fulfilled_time,
        fulfilled_values: values.map(|v| serde_json::from_str(&v)).transpose().map_err(json_err)?,
    }))
}

pub fn fulfill_order(conn: &Connection, id: i64, time: f64, values: &[(VariableId, f64)]) -> Result<(), ServiceError> {
    let vals = serde_json::to_string(values).map_err(json_err)?;
    conn.execute(
        "UPDATE orders SET fulfilled_time = ?2, fulfilled_values = ?3 WHERE id = ?1",
        params![id, time, vals],
    )?;
    Ok(())
}
