export class IngestError extends Error {
  constructor(message: string, options?: ErrorOptions) {
    super(message, options);
    this.name = new.target.name;
  }
}

/** HTTP or connection failure; `retriable` marks transient conditions. */
export class NetworkError extends IngestError {
  status?: number;
  retriable: boolean;

  constructor(
    message: string,
    opts: { status?: number; retriable?: boolean; cause?: unknown } = {},
  ) {
    super(message, opts.cause === undefined ? undefined : { cause: opts.cause });
    this.status = opts.status;
    // connection-level failures and server errors are worth retrying,
    // client errors (bad collection id) are not
    this.retriable = opts.retriable ?? (opts.status === undefined || opts.status >= 500);
  }
}

/** The bytes are not what the format promises (magic, truncation, layout). */
export class FormatError extends IngestError {}

/** The content is well-formed but unusable (grid mismatch, empty mask, 4D). */
export class DataError extends IngestError {}

/** Filesystem-level read/write failure. */
export class IoError extends IngestError {}
