//! Local-only networking rules and a socket audit for the running process.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::NetError;

static OUTBOUND_ATTEMPTS: AtomicU64 = AtomicU64::new(0);

/// Accepts loopback addresses and addresses listed exactly in `allowlist`.
/// The unspecified address is refused unless it is itself allowlisted.
pub fn local_only_guard(addr: &SocketAddr, allowlist: &[IpAddr]) -> Result<(), NetError> {
    let ip = addr.ip();
    if ip.is_loopback() || allowlist.contains(&ip) {
        Ok(())
    } else {
        Err(NetError::NonLocalBind { addr: addr.to_string() })
    }
}

fn is_lan(ip: IpAddr) -> bool {
    match ip {
        IpAddr::V4(v4) => v4.is_private() || v4.is_link_local(),
        IpAddr::V6(v6) => match v6.to_ipv4_mapped() {
            Some(v4) => is_lan(IpAddr::V4(v4)),
            // unique local fc00::/7 and link-local fe80::/10
            None => (v6.segments()[0] & 0xfe00) == 0xfc00 || (v6.segments()[0] & 0xffc0) == 0xfe80,
        },
    }
}

fn is_loopback(ip: IpAddr) -> bool {
    match ip {
        IpAddr::V6(v6) => v6.is_loopback() || v6.to_ipv4_mapped().is_some_and(|v4| v4.is_loopback()),
        IpAddr::V4(v4) => v4.is_loopback(),
    }
}

/// Whether an accepted connection may be served. Peers on the LAN are only
/// welcome when the hub was deliberately bound to an allowlisted address.
pub fn peer_allowed(peer: IpAddr, bound: IpAddr, allowlist: &[IpAddr]) -> bool {
    is_loopback(peer) || allowlist.contains(&peer) || (!is_loopback(bound) && is_lan(peer))
}

/// Every outbound connection the hub might make passes through here. The
/// hub has none, so this always refuses and counts the attempt.
pub fn check_outbound(addr: &SocketAddr) -> Result<(), NetError> {
    OUTBOUND_ATTEMPTS.fetch_add(1, Ordering::SeqCst);
    Err(NetError::OutboundRefused { addr: addr.to_string() })
}

pub fn outbound_attempts() -> u64 {
    OUTBOUND_ATTEMPTS.load(Ordering::SeqCst)
}

/// One connected socket owned by this process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocketRecord {
    pub proto: &'static str,
    pub local: SocketAddr,
    pub remote: SocketAddr,
}

impl SocketRecord {
    pub fn is_local(&self) -> bool {
        is_loopback(self.remote.ip())
    }
}

/// Lists the connected (non-listening) sockets of this process by matching
/// `/proc/self/fd` socket inodes against the kernel's socket tables.
pub fn audit_sockets() -> io::Result<Vec<SocketRecord>> {
    let mut inodes = HashSet::new();
    for fd in fs::read_dir("/proc/self/fd")? {
        let Ok(target) = fs::read_link(fd?.path()) else { continue };
        let target = target.to_string_lossy();
        if let Some(num) = target.strip_prefix("socket:[").and_then(|s| s.strip_suffix(']')) {
            if let Ok(inode) = num.parse::<u64>() {
                inodes.insert(inode);
            }
        }
    }
    let mut out = Vec::new();
    for (proto, table) in [("tcp", "/proc/net/tcp"), ("tcp6", "/proc/net/tcp6"), ("udp", "/proc/net/udp"), ("udp6", "/proc/net/udp6")] {
        let Ok(text) = fs::read_to_string(table) else { continue };
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() < 10 {
                continue;
            }
            let Ok(inode) = cols[9].parse::<u64>() else { continue };
            if !inodes.contains(&inode) {
                continue;
            }
            let (Some(local), Some(remote)) = (parse_proc_addr(cols[1]), parse_proc_addr(cols[2])) else { continue };
            if remote.port() == 0 && remote.ip().is_unspecified() {
                continue;
            }
            out.push(SocketRecord { proto, local, remote });
        }
    }
    Ok(out)
}

/// Connected sockets whose remote end is not loopback.
pub fn non_local_connections() -> io::Result<Vec<SocketRecord>> {
    Ok(audit_sockets()?.into_iter().filter(|s| !s.is_local()).collect())
}

/// Parses `0100007F:1F90` style addresses (words in host byte order).
fn parse_proc_addr(s: &str) -> Option<SocketAddr> {
    let (ip_hex, port_hex) = s.split_once(':')?;
    let port = u16::from_str_radix(port_hex, 16).ok()?;
    let ip = match ip_hex.len() {
        8 => IpAddr::V4(Ipv4Addr::from(u32::from_str_radix(ip_hex, 16).ok()?.to_ne_bytes())),
        32 => {
            let mut bytes = [0u8; 16];
            for (i, chunk) in bytes.chunks_mut(4).enumerate() {
                let word = u32::from_str_radix(&ip_hex[i * 8..i * 8 + 8], 16).ok()?;
                chunk.copy_from_slice(&word.to_ne_bytes());
            }
            IpAddr::V6(Ipv6Addr::from(bytes))
        }
        _ => return None,
    };
    Some(SocketAddr::new(ip, port))
}
