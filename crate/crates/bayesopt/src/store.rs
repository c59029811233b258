//! One JSON document per session in a directory.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, SessionError};
use crate::session::SessionDocument;

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

/// Ids are generated by the service, but file names come from client input,
/// so anything outside this alphabet is treated as unknown.
fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(SessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf> {
        if !valid_id(id) {
            return Err(SessionError::NotFound(id.to_string()));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    /// Writes to a temporary file, syncs it and renames it over the old
    /// document, so a crash leaves either the old or the new version.
    pub fn save(&self, doc: &SessionDocument) -> Result<()> {
        let path = self.path(&doc.id)?;
        let tmp = self.dir.join(format!(".{}.json.tmp", doc.id));
        {
            let mut file = fs::File::create(&tmp)?;
            serde_json::to_writer_pretty(&mut file, doc)?;
            file.write_all(b"\n")?;
            file.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn load(&self, id: &str) -> Result<SessionDocument> {
        let path = self.path(id)?;
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(SessionError::NotFound(id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        Ok(serde_json::from_str(&text)?)
    }

    pub fn exists(&self, id: &str) -> bool {
        self.path(id).is_ok_and(|p| p.exists())
    }

    pub fn delete(&self, id: &str) -> Result<()> {
        match fs::remove_file(self.path(id)?) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                Err(SessionError::NotFound(id.to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Ids of all stored sessions, sorted.
    pub fn ids(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let Some(name) = name.to_str() else { continue };
            if let Some(id) = name.strip_suffix(".json") {
                if valid_id(id) {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Session created with this idempotency token, if any.
    pub fn find_created_by(&self, token: &str) -> Result<Option<String>> {
        for id in self.ids()? {
            match self.load(&id) {
                Ok(doc) if doc.create_token.as_deref() == Some(token) => return Ok(Some(id)),
                // Deleted between listing and loading.
                Err(SessionError::NotFound(_)) => {}
                Err(e) => return Err(e),
                Ok(_) => {}
            }
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{CreateSession, Mode, Session};

    fn doc(id: &str) -> SessionDocument {
        let config = CreateSession {
            mode: Some(Mode::Scalar),
            bounds: vec![(0.0, 1.0)],
            ..Default::default()
        }
        .into_config()
        .unwrap();
        Session::create(id.into(), config, Some(format!("tok-{id}")))
            .unwrap()
            .document()
            .clone()
    }

    #[test]
    fn save_load_delete() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        store.save(&doc("a")).unwrap();
        store.save(&doc("b")).unwrap();
        assert_eq!(store.ids().unwrap(), vec!["a", "b"]);
        assert_eq!(
            store.load("a").unwrap(),
            doc_with_time(&store.load("a").unwrap(), "a")
        );
        assert_eq!(
            store.find_created_by("tok-b").unwrap().as_deref(),
            Some("b")
        );
        assert_eq!(store.find_created_by("nope").unwrap(), None);
        store.delete("a").unwrap();
        assert!(matches!(store.delete("a"), Err(SessionError::NotFound(_))));
        assert!(matches!(store.load("a"), Err(SessionError::NotFound(_))));
        // No temp files are left behind.
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
    }

    fn doc_with_time(loaded: &SessionDocument, id: &str) -> SessionDocument {
        let mut d = doc(id);
        d.created_ms = loaded.created_ms;
        d
    }

    #[test]
    fn path_traversal_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        assert!(matches!(
            store.load("../etc/passwd"),
            Err(SessionError::NotFound(_))
        ));
        assert!(!store.exists(".."));
    }
}
