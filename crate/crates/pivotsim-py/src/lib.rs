//! Python bindings for the pivot simulator (placeholder; filled in below).
