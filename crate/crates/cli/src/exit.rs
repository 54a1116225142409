use histoseg::Error;

/// Process exit codes, one per error class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Code {
    Usage = 2,
    Io = 3,
    Format = 4,
    InvalidArgument = 5,
    UnresolvableClusters = 6,
    SearchLimit = 7,
    CountUnreachable = 8,
    Numeric = 9,
}

#[derive(Debug)]
pub struct Failure {
    pub code: Code,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: Code::Usage, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: Code::Io, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => Code::Io,
            Error::Format { .. } => Code::Format,
            Error::InvalidArgument(_) | Error::EmptyHistogram(_) => Code::InvalidArgument,
            Error::UnresolvableClusters { .. } => Code::UnresolvableClusters,
            Error::SearchLimit { .. } => Code::SearchLimit,
            Error::CountUnreachable { .. } => Code::CountUnreachable,
            _ => Code::Numeric,
        };
        Self { code, message: e.to_string() }
    }
}
