//! Placeholder; filled in after the core library lands.
