//! Bulk operations. With the `parallel` feature (on by default) these run on
//! the rayon pool; the `_seq` forms are always sequential and produce
//! identical output.

use crate::canonical::{self, CanonError};
use crate::linkformat::{dedupe, yearly_first_filter};
use crate::model::TimeMapRecord;

/// Order-preserving map over a slice.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Order-preserving map that consumes its input.
pub fn map_owned<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

pub fn surt_all<S: AsRef<str> + Sync>(uris: &[S]) -> Vec<Result<String, CanonError>> {
    map(uris, |u| canonical::surt(u.as_ref()))
}

pub fn surt_all_seq<S: AsRef<str>>(uris: &[S]) -> Vec<Result<String, CanonError>> {
    uris.iter().map(|u| canonical::surt(u.as_ref())).collect()
}

/// Dedupe then yearly filter, per record.
pub fn reduce_timemaps(records: Vec<TimeMapRecord>) -> Vec<TimeMapRecord> {
    map_owned(records, |r| yearly_first_filter(dedupe(r)))
}

pub fn reduce_timemaps_seq(records: Vec<TimeMapRecord>) -> Vec<TimeMapRecord> {
    records
        .into_iter()
        .map(|r| yearly_first_filter(dedupe(r)))
        .collect()
}
