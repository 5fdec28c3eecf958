// English/Turkish label pairs for the console chrome. Status labels coming
// back from the chain ("waiting for confirmation", "waiting for approval",
// "approved") are rendered verbatim and never pass through here.

export type Locale = "en" | "tr";

const LABELS = {
  appTitle: ["Disaster Resource Ledger", "Afet Kaynak Defteri"],
  tabForms: ["Apply", "Başvuru"],
  tabQueue: ["Approval queue", "Onay kuyruğu"],
  tabTracker: ["Tracker", "Takip"],
  formNeed: ["Request form", "İhtiyaç formu"],
  formSupport: ["Support form", "Destek formu"],
  category: ["Type", "Tür"],
  amount: ["Amount", "Miktar"],
  unit: ["Unit", "Birim"],
  shipping: ["Shipping type", "Nakliye türü"],
  name: ["Full name", "Ad soyad"],
  phone: ["Phone", "Telefon"],
  address: ["Address", "Adres"],
  notes: ["Notes", "Notlar"],
  personalNote: [
    "Contact details stay off-chain on this node and can be erased later.",
    "İletişim bilgileri zincire yazılmaz, bu düğümde kalır ve sonradan silinebilir.",
  ],
  submit: ["Submit application", "Başvuruyu gönder"],
  submitting: ["Submitting…", "Gönderiliyor…"],
  receiptTx: ["Transaction", "İşlem"],
  receiptHeight: ["committed at height", "şu blok yüksekliğinde kaydedildi:"],
  unavailable: [
    "Service unavailable — the node did not answer. Your form is unchanged; try again.",
    "Hizmet kullanılamıyor — düğüm yanıt vermedi. Formunuz korundu; yeniden deneyin.",
  ],
  keyPrompt: [
    "Paste the hex contents of your checker .key file to unlock the queue. The key never leaves this browser session.",
    "Kuyruğu açmak için denetleyici .key dosyanızın hex içeriğini yapıştırın. Anahtar bu tarayıcı oturumundan çıkmaz.",
  ],
  keyLoad: ["Unlock queue", "Kuyruğu aç"],
  keyForget: ["Forget key", "Anahtarı unut"],
  keyBad: ["That is not a usable key", "Bu anahtar kullanılamıyor"],
  queueLocked: ["Import a checker key to see the queue.", "Kuyruğu görmek için denetleyici anahtarı yükleyin."],
  queueDenied: [
    "This key does not hold the checker role; the queue stays hidden.",
    "Bu anahtarın denetleyici yetkisi yok; kuyruk gizli kalır.",
  ],
  queueEmpty: ["Nothing waiting for approval.", "Onay bekleyen kayıt yok."],
  queueSession: ["Checker session", "Denetleyici oturumu"],
  approve: ["Approve", "Onayla"],
  approving: ["Waiting for commit…", "Kayıt bekleniyor…"],
  reveal: ["Show contact", "İletişimi göster"],
  revealDeleted: ["Personal record was erased.", "Kişisel kayıt silinmiş."],
  alreadyApproved: [
    "Already approved by another checker.",
    "Başka bir denetleyici tarafından zaten onaylanmış.",
  ],
  approvedToast: ["Approval committed.", "Onay kaydedildi."],
  rejectedToast: ["The network rejected this transaction.", "Ağ bu işlemi reddetti."],
  tabNeeds: ["Needs", "İhtiyaçlar"],
  tabSupports: ["Supports", "Destekler"],
  tabApproved: ["Approved supports", "Onaylanan destekler"],
  colId: ["Id", "No"],
  colKind: ["Type", "Tür"],
  colAmount: ["Amount", "Miktar"],
  colUnit: ["Unit", "Birim"],
  colShipping: ["Shipping", "Nakliye"],
  colStatus: ["Status", "Durum"],
  colCreated: ["Created at", "Oluşturulma"],
  colApproved: ["Approved at", "Onaylanma"],
  emptyList: ["No records yet.", "Henüz kayıt yok."],
  trackerHeight: ["chain height", "zincir yüksekliği"],
} as const;

export type LabelKey = keyof typeof LABELS;

let current: Locale = "en";

export function setLocale(locale: Locale): void {
  current = locale;
}

export function getLocale(): Locale {
  return current;
}

export function t(key: LabelKey): string {
  return LABELS[key][current === "en" ? 0 : 1];
}
