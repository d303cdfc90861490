/** Error taxonomy shared by the library and the CLI. */

export class ExtractorError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

/** A requested model whose weights cannot be obtained here. */
export class ModelUnavailableError extends ExtractorError {}

/** Malformed bytes in a feature file. */
export class FormatError extends ExtractorError {}

/** Structurally sound file whose content breaks an invariant. */
export class ValidationError extends ExtractorError {}

/** Bad arguments from the caller. */
export class PreconditionError extends ExtractorError {}
