// Shapes of the broker's format=json API.

export interface OaiIdentifier {
  identifier: string;
  datestamp: string;
}

export interface IdentifierList {
  verb: string;
  identifiers: OaiIdentifier[];
}

export interface ParamSpec {
  name: string;
  type: 'string' | 'integer' | 'boolean';
  required: boolean;
}

export interface BehaviorSpec {
  name: string;
  outputMime: string;
  params: ParamSpec[];
}

export interface InterfaceSpec {
  id: string;
  behaviors: BehaviorSpec[];
}

export interface Binding {
  structoidSID: string;
  schemaURI: string;
  mechanismID: string;
  interface: InterfaceSpec;
}

export interface ListBehaviorsResponse {
  objectID: string;
  bindings: Binding[];
}

export interface BehaviorResult {
  mime: string;
  bodyBase64: string;
}

export interface PerformRequestBody {
  objectID: string;
  mechanismURL: string;
  behaviorName: string;
  structoidSID: string;
  params: Record<string, string | number | boolean>;
}

export interface ErrorEnvelope {
  error: { code: string; message: string };
}
