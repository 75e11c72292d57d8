use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use orbitrl_core::tle::{fetch_catalog, Catalog, FetchError};
use orbitrl_core::ISS_TLE;

/// Serves one request with the given status line and body.
fn serve_once(status: &'static str, body: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut line = String::new();
        while reader.read_line(&mut line).unwrap() > 0 && line != "\r\n" {
            line.clear();
        }
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
    });
    format!("http://{addr}/catalog.tle")
}

#[test]
fn downloads_body() {
    let url = serve_once("200 OK", ISS_TLE);
    let bytes = fetch_catalog(&url, Duration::from_secs(5)).unwrap();
    let catalog = Catalog::parse(&String::from_utf8(bytes).unwrap());
    assert_eq!(catalog.records.len(), 1);
    assert_eq!(catalog.records[0].catalog_number, 25544);
}

#[test]
fn reports_status() {
    let url = serve_once("404 Not Found", "missing");
    assert_eq!(
        fetch_catalog(&url, Duration::from_secs(5)),
        Err(FetchError::NonSuccessStatus(404))
    );
}

#[test]
fn unreachable_host_is_an_error() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let err = fetch_catalog(&format!("http://127.0.0.1:{port}/x"), Duration::from_secs(5)).unwrap_err();
    assert!(matches!(err, FetchError::Network(_) | FetchError::Timeout), "{err:?}");
}

#[test]
fn rejects_other_schemes() {
    assert!(matches!(
        fetch_catalog("ftp://example.org/x", Duration::from_secs(1)),
        Err(FetchError::InvalidUrl(_))
    ));
}
