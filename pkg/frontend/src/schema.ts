// Client-side form validation. The node publishes the exact JSON schema it
// enforces at GET /v1/schema/application; compiling that same document with
// Ajv keeps both sides of the wire agreeing on what a valid application is.
// Invalid forms never reach the network.

import Ajv, { ErrorObject, ValidateFunction } from "ajv";

import { ApplicationBody } from "./api";

export interface FormModel {
  kind: "need" | "support";
  category: string;
  amount: string;
  unit: string;
  shipping: string;
  name: string;
  phone: string;
  address: string;
  notes: string;
}

export interface FieldError {
  field: string;
  message: string;
}

export class ApplicationValidator {
  private readonly check: ValidateFunction;

  constructor(schema: Record<string, unknown>) {
    // the schema uses draft-07 keywords; contentEncoding is annotation-only
    const ajv = new Ajv({ strict: false, allErrors: true });
    this.check = ajv.compile(schema);
  }

  validate(body: unknown): FieldError[] {
    if (this.check(body)) return [];
    return (this.check.errors ?? []).map(fieldError);
  }
}

function fieldError(err: ErrorObject): FieldError {
  let field = err.instancePath.replace(/^\//, "").replace(/\//g, ".");
  if (err.keyword === "required") {
    const missing = (err.params as { missingProperty: string }).missingProperty;
    field = field ? `${field}.${missing}` : missing;
  }
  return { field: field || "body", message: err.message ?? "invalid" };
}

// Translates raw form input into the request body, leaving optional fields
// out entirely when blank so additionalProperties/minLength stay honest.
// The amount is the only numeric field; a non-integer entry is preserved as
// NaN so the schema rejects it client-side instead of silently truncating.
export function toApplicationBody(model: FormModel): ApplicationBody {
  const amount = /^\s*-?\d+\s*$/.test(model.amount)
    ? parseInt(model.amount, 10)
    : NaN;
  const personal: ApplicationBody["personal"] = {
    name: model.name,
    phone: model.phone,
  };
  if (model.address.trim() !== "") personal.address = model.address;
  if (model.notes.trim() !== "") personal.notes = model.notes;
  const body: ApplicationBody = {
    kind: model.kind,
    category: model.category,
    amount,
    unit: model.unit,
    personal,
  };
  if (model.kind === "support") body.shipping = model.shipping;
  return body;
}
